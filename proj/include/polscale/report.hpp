#pragma once

#include <algorithm>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "polscale/jsonl.hpp"

// Static report bundle: per axis a party strip chart, a 2-D scatter with the
// axis chord drawn over it, and a diachronic line chart. Every chart is a
// self-contained SVG with a TSV sibling holding exactly the data the chart
// was drawn from, so the chart is a pure function of its sibling. No
// timestamps anywhere; regenerating from unchanged inputs is byte-identical.

namespace polscale::report {

namespace fs = std::filesystem;

struct ReportBundle {
  // file name under the report directory -> full content
  std::map<std::string, std::string> files;
  std::vector<std::string> notes;
};

namespace detail {

inline std::string xml_escape(const std::string& s) {
  std::string out;
  out.reserve(s.size());
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

inline std::string color_for(size_t index) {
  static const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                                  "#ff7f0e", "#8c564b", "#e377c2", "#7f7f7f",
                                  "#bcbd22", "#17becf"};
  return palette[index % (sizeof palette / sizeof *palette)];
}

inline std::string num(double v) { return format_fixed(v, 2); }

// Linear value -> pixel map over [lo, hi]; a collapsed range gets padding so
// single points still land mid-chart.
struct LinearMap {
  double lo = 0, hi = 1, px_lo = 0, px_hi = 1;

  LinearMap(double vlo, double vhi, double plo, double phi)
      : lo(vlo), hi(vhi), px_lo(plo), px_hi(phi) {
    if (!(lo < hi)) {
      lo -= 1.0;
      hi += 1.0;
    }
  }
  double operator()(double v) const {
    return px_lo + (v - lo) / (hi - lo) * (px_hi - px_lo);
  }
};

struct ScoreRow {
  std::string subject, party, cluster;
  double score = 0;
};

struct SeriesRow {
  std::string party;
  int year = 0;
  double score = 0;
  long n_segments = 0, n_representatives = 0;
};

struct PlanePoint {
  std::string subject;
  double x = 0, y = 0;
};

inline std::string svg_open(int w, int h, const std::string& title) {
  std::string s = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" +
                  std::to_string(w) + "\" height=\"" + std::to_string(h) +
                  "\" viewBox=\"0 0 " + std::to_string(w) + " " +
                  std::to_string(h) + "\" font-family=\"sans-serif\">\n";
  s += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  s += "<text x=\"" + std::to_string(w / 2) +
       "\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">" +
       xml_escape(title) + "</text>\n";
  return s;
}

inline std::string svg_line(double x1, double y1, double x2, double y2,
                            const std::string& stroke,
                            const std::string& extra = "") {
  return "<line x1=\"" + num(x1) + "\" y1=\"" + num(y1) + "\" x2=\"" +
         num(x2) + "\" y2=\"" + num(y2) + "\" stroke=\"" + stroke + "\"" +
         (extra.empty() ? "" : " " + extra) + "/>\n";
}

inline std::string svg_circle(double cx, double cy, double r,
                              const std::string& fill) {
  return "<circle cx=\"" + num(cx) + "\" cy=\"" + num(cy) + "\" r=\"" +
         num(r) + "\" fill=\"" + fill + "\" fill-opacity=\"0.75\"/>\n";
}

inline std::string svg_text(double x, double y, const std::string& text,
                            const std::string& extra = "") {
  return "<text x=\"" + num(x) + "\" y=\"" + num(y) + "\" font-size=\"11\"" +
         (extra.empty() ? "" : " " + extra) + ">" + xml_escape(text) +
         "</text>\n";
}

inline std::vector<std::string> sorted_parties(
    const std::vector<ScoreRow>& rows) {
  // columns ordered by mean score so the chart reads against -> for
  std::map<std::string, std::pair<double, long>> acc;
  for (const auto& r : rows) {
    acc[r.party].first += r.score;
    acc[r.party].second += 1;
  }
  std::vector<std::pair<std::string, double>> means;
  for (const auto& [party, sn] : acc)
    means.push_back({party, sn.first / static_cast<double>(sn.second)});
  std::sort(means.begin(), means.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second < b.second;
    return a.first < b.first;
  });
  std::vector<std::string> out;
  for (const auto& [party, mean] : means) out.push_back(party);
  return out;
}

inline std::string strip_chart_svg(const std::string& topic,
                                   const std::vector<ScoreRow>& rows) {
  const int W = 640, H = 400, ML = 56, MR = 20, MT = 36, MB = 64;
  auto parties = sorted_parties(rows);
  double lo = rows[0].score, hi = rows[0].score;
  for (const auto& r : rows) {
    lo = std::min(lo, r.score);
    hi = std::max(hi, r.score);
  }
  LinearMap ymap(lo, hi, H - MB, MT);  // larger score higher on the page

  std::string svg = svg_open(W, H, topic + " scores by party");
  for (double g : {-1.0, 0.0, 1.0}) {
    if (g < ymap.lo || g > ymap.hi) continue;
    svg += svg_line(ML, ymap(g), W - MR, ymap(g), "#dddddd");
    svg += svg_text(8, ymap(g) + 4, format_fixed(g, 1));
  }
  svg += svg_line(ML, MT, ML, H - MB, "#333333");

  std::map<std::string, size_t> column, count;
  for (size_t i = 0; i < parties.size(); ++i) column[parties[i]] = i;
  double step = static_cast<double>(W - ML - MR) /
                static_cast<double>(parties.size());
  for (const auto& r : rows) {
    size_t i = column[r.party];
    double cx = ML + step * (static_cast<double>(i) + 0.5);
    // deterministic spread inside the column instead of random jitter
    double dx = (static_cast<double>(count[r.party]++ % 7) - 3.0) * 4.0;
    svg += svg_circle(cx + dx, ymap(r.score), 3.5, color_for(i));
  }
  for (size_t i = 0; i < parties.size(); ++i) {
    double cx = ML + step * (static_cast<double>(i) + 0.5);
    svg += svg_text(cx, H - MB + 16, parties[i],
                    "text-anchor=\"middle\" fill=\"" + color_for(i) + "\"");
  }
  svg += svg_text(W / 2.0, H - 12, "parties ordered against to for",
                  "text-anchor=\"middle\" fill=\"#666666\"");
  svg += "</svg>\n";
  return svg;
}

inline std::string scatter_svg(const std::string& topic,
                               const std::vector<PlanePoint>& points,
                               const PlanePoint* pro, const PlanePoint* con) {
  const int W = 560, H = 480, M = 48;
  double xlo = points[0].x, xhi = points[0].x, ylo = points[0].y,
         yhi = points[0].y;
  auto stretch = [&](const PlanePoint& p) {
    xlo = std::min(xlo, p.x);
    xhi = std::max(xhi, p.x);
    ylo = std::min(ylo, p.y);
    yhi = std::max(yhi, p.y);
  };
  for (const auto& p : points) stretch(p);
  if (pro) stretch(*pro);
  if (con) stretch(*con);
  double xpad = (xhi - xlo) * 0.08, ypad = (yhi - ylo) * 0.08;
  LinearMap xmap(xlo - xpad, xhi + xpad, M, W - M);
  LinearMap ymap(ylo - ypad, yhi + ypad, H - M, M);

  std::string svg = svg_open(W, H, topic + " 2-D view");
  if (pro && con) {
    svg += svg_line(xmap(con->x), ymap(con->y), xmap(pro->x), ymap(pro->y),
                    "#888888", "stroke-dasharray=\"6 4\" stroke-width=\"1.5\"");
    svg += svg_circle(xmap(con->x), ymap(con->y), 5, "#d62728");
    svg += svg_text(xmap(con->x) + 8, ymap(con->y) + 4, "con");
    svg += svg_circle(xmap(pro->x), ymap(pro->y), 5, "#2ca02c");
    svg += svg_text(xmap(pro->x) + 8, ymap(pro->y) + 4, "pro");
  }
  for (const auto& p : points)
    svg += svg_circle(xmap(p.x), ymap(p.y), 3.5, "#1f77b4");
  svg += "</svg>\n";
  return svg;
}

inline std::string diachronic_svg(const std::string& topic,
                                  const std::vector<SeriesRow>& rows) {
  const int W = 720, H = 400, ML = 56, MR = 150, MT = 36, MB = 48;
  int ylo_year = rows[0].year, yhi_year = rows[0].year;
  double slo = rows[0].score, shi = rows[0].score;
  std::set<std::string> party_set;
  for (const auto& r : rows) {
    ylo_year = std::min(ylo_year, r.year);
    yhi_year = std::max(yhi_year, r.year);
    slo = std::min(slo, r.score);
    shi = std::max(shi, r.score);
    party_set.insert(r.party);
  }
  std::vector<std::string> parties(party_set.begin(), party_set.end());
  LinearMap xmap(ylo_year, yhi_year, ML, W - MR);
  LinearMap ymap(slo, shi, H - MB, MT);

  std::string svg = svg_open(W, H, topic + " positions over time");
  for (double g : {-1.0, 0.0, 1.0}) {
    if (g < ymap.lo || g > ymap.hi) continue;
    svg += svg_line(ML, ymap(g), W - MR, ymap(g), "#dddddd");
    svg += svg_text(8, ymap(g) + 4, format_fixed(g, 1));
  }
  for (int year = ylo_year; year <= yhi_year; ++year) {
    // label at most ~8 year ticks
    int span = yhi_year - ylo_year + 1;
    int every = span <= 8 ? 1 : (span + 7) / 8;
    if ((year - ylo_year) % every) continue;
    svg += svg_text(xmap(year), H - MB + 16, std::to_string(year),
                    "text-anchor=\"middle\"");
  }
  for (size_t i = 0; i < parties.size(); ++i) {
    const auto& party = parties[i];
    std::vector<const SeriesRow*> line;
    for (const auto& r : rows)
      if (r.party == party) line.push_back(&r);
    std::sort(line.begin(), line.end(),
              [](const SeriesRow* a, const SeriesRow* b) {
                return a->year < b->year;
              });
    std::string pts;
    for (const auto* r : line) {
      if (!pts.empty()) pts += " ";
      pts += num(xmap(r->year)) + "," + num(ymap(r->score));
    }
    if (line.size() > 1)
      svg += "<polyline fill=\"none\" stroke=\"" + color_for(i) +
             "\" stroke-width=\"1.5\" points=\"" + pts + "\"/>\n";
    for (const auto* r : line)
      svg += svg_circle(xmap(r->year), ymap(r->score), 3, color_for(i));
    svg += svg_circle(W - MR + 16, MT + 16.0 * static_cast<double>(i), 4,
                      color_for(i));
    svg += svg_text(W - MR + 26, MT + 16.0 * static_cast<double>(i) + 4, party);
  }
  svg += "</svg>\n";
  return svg;
}

}  // namespace detail

inline ReportBundle emit_report(const fs::path& topic_dir) {
  using namespace detail;
  ReportBundle bundle;
  auto note = [&](const std::string& n) { bundle.notes.push_back(n); };

  // scores, grouped by axis
  std::map<std::string, std::vector<ScoreRow>> scores;
  std::map<std::string, std::string> axis_topic;
  if (fs::exists(topic_dir / "scores.jsonl")) {
    read_jsonl(topic_dir / "scores.jsonl", [&](size_t, json&& j) {
      std::string slug = j.at("axis").get<std::string>();
      axis_topic[slug] = j.value("axis_topic", slug);
      scores[slug].push_back({j.at("subject_id").get<std::string>(),
                              j.value("party_id", "unknown"),
                              j.value("cluster", ""),
                              j.at("score").get<double>()});
    });
  } else {
    note("scores table missing; score charts skipped");
  }

  json plane = json::object();
  if (fs::exists(topic_dir / "plane.json"))
    plane = json::parse(read_file(topic_dir / "plane.json"));
  else
    note("2-D plane table missing; scatter charts skipped");

  std::map<std::string, std::vector<SeriesRow>> series;
  if (fs::exists(topic_dir / "diachronic.jsonl")) {
    read_jsonl(topic_dir / "diachronic.jsonl", [&](size_t, json&& j) {
      std::string slug = j.at("axis").get<std::string>();
      axis_topic.try_emplace(slug, j.value("axis_topic", slug));
      series[slug].push_back({j.at("party_id").get<std::string>(),
                              j.at("year").get<int>(),
                              j.at("score").get<double>(),
                              j.value("n_segments", 0L),
                              j.value("n_representatives", 0L)});
    });
  } else {
    note("diachronic table missing; time charts skipped");
  }

  json evaluation;
  if (fs::exists(topic_dir / "evaluation.json"))
    evaluation = json::parse(read_file(topic_dir / "evaluation.json"));
  else
    note("evaluation table missing; comparison section skipped");

  // per-axis charts + sibling data
  struct AxisFiles {
    std::string strip_svg, strip_tsv, plane_svg, plane_tsv, dia_svg, dia_tsv;
  };
  std::map<std::string, AxisFiles> per_axis;

  for (const auto& [slug, rows] : scores) {
    if (rows.empty()) continue;
    std::string tsv = "subject\tparty\tscore\tcluster\n";
    for (const auto& r : rows)
      tsv += r.subject + "\t" + r.party + "\t" + format_double(r.score) +
             "\t" + r.cluster + "\n";
    bundle.files["scores_" + slug + ".tsv"] = tsv;
    bundle.files["scores_" + slug + ".svg"] =
        strip_chart_svg(axis_topic[slug], rows);
    per_axis[slug].strip_svg = "scores_" + slug + ".svg";
    per_axis[slug].strip_tsv = "scores_" + slug + ".tsv";
  }

  for (const auto& [slug, pj] : plane.items()) {
    std::vector<PlanePoint> points;
    for (const auto& p : pj.value("points", json::array()))
      points.push_back({p.at("subject_id").get<std::string>(),
                        p.at("x").get<double>(), p.at("y").get<double>()});
    if (points.empty()) continue;
    PlanePoint pro, con;
    bool have_refs = pj.contains("pro_ref") && pj.contains("con_ref");
    if (have_refs) {
      pro = {"pro_ref", pj["pro_ref"].at("x").get<double>(),
             pj["pro_ref"].at("y").get<double>()};
      con = {"con_ref", pj["con_ref"].at("x").get<double>(),
             pj["con_ref"].at("y").get<double>()};
    }
    std::string tsv = "subject\tx\ty\n";
    for (const auto& p : points)
      tsv += p.subject + "\t" + format_double(p.x) + "\t" +
             format_double(p.y) + "\n";
    if (have_refs) {
      tsv += "pro_ref\t" + format_double(pro.x) + "\t" + format_double(pro.y) +
             "\n";
      tsv += "con_ref\t" + format_double(con.x) + "\t" + format_double(con.y) +
             "\n";
    }
    std::string topic = pj.value("topic", slug);
    bundle.files["plane_" + slug + ".tsv"] = tsv;
    bundle.files["plane_" + slug + ".svg"] = scatter_svg(
        topic, points, have_refs ? &pro : nullptr, have_refs ? &con : nullptr);
    per_axis[slug].plane_svg = "plane_" + slug + ".svg";
    per_axis[slug].plane_tsv = "plane_" + slug + ".tsv";
  }

  for (const auto& [slug, rows] : series) {
    if (rows.empty()) continue;
    std::string tsv = "party\tyear\tscore\tn_segments\tn_representatives\n";
    for (const auto& r : rows)
      tsv += r.party + "\t" + std::to_string(r.year) + "\t" +
             format_double(r.score) + "\t" + std::to_string(r.n_segments) +
             "\t" + std::to_string(r.n_representatives) + "\n";
    bundle.files["diachronic_" + slug + ".tsv"] = tsv;
    bundle.files["diachronic_" + slug + ".svg"] =
        diachronic_svg(axis_topic[slug], rows);
    per_axis[slug].dia_svg = "diachronic_" + slug + ".svg";
    per_axis[slug].dia_tsv = "diachronic_" + slug + ".tsv";
  }

  // axes with scores but no series get an explicit absence note
  for (const auto& [slug, rows] : scores)
    if (series.find(slug) == series.end() || series[slug].empty())
      note("diachronic chart omitted for " + slug + ": no data rows");

  // index
  std::string html =
      "<!DOCTYPE html>\n<html>\n<head>\n<meta charset=\"utf-8\">\n"
      "<title>scaling report</title>\n"
      "<style>body{font-family:sans-serif;max-width:60em;margin:2em auto}"
      "table{border-collapse:collapse}td,th{border:1px solid #999;"
      "padding:4px 8px}img{max-width:100%}</style>\n</head>\n<body>\n"
      "<h1>Scaling report</h1>\n";

  if (!bundle.notes.empty()) {
    html += "<h2>Notes</h2>\n<ul>\n";
    for (const auto& n : bundle.notes)
      html += "<li>" + xml_escape(n) + "</li>\n";
    html += "</ul>\n";
  }

  for (const auto& [slug, f] : per_axis) {
    html += "<h2>" + xml_escape(axis_topic.count(slug) ? axis_topic[slug] : slug) +
            "</h2>\n";
    auto chart = [&](const std::string& svg, const std::string& tsv) {
      if (svg.empty()) return;
      html += "<p><img src=\"" + svg + "\" alt=\"" + svg + "\"> <br>\n";
      html += "<a href=\"" + svg + "\">" + svg + "</a> | <a href=\"" + tsv +
              "\">" + tsv + "</a></p>\n";
    };
    chart(f.strip_svg, f.strip_tsv);
    chart(f.plane_svg, f.plane_tsv);
    chart(f.dia_svg, f.dia_tsv);
  }

  if (evaluation.is_object() && evaluation.contains("comparisons") &&
      !evaluation["comparisons"].empty()) {
    html += "<h2>Ordering comparisons</h2>\n<table>\n<tr><th>ours</th>"
            "<th>expert</th><th>topic</th><th>n</th><th>spearman</th>"
            "<th>kendall</th><th>lcs</th><th>dropped</th></tr>\n";
    for (const auto& c : evaluation["comparisons"]) {
      html += "<tr><td>" + xml_escape(c.value("ours", "")) + "</td><td>" +
              xml_escape(c.value("expert", "")) + "</td><td>" +
              xml_escape(c.value("topic", "")) + "</td>";
      if (c.contains("error")) {
        html += "<td colspan=\"5\">" +
                xml_escape(c["error"].get<std::string>()) + "</td></tr>\n";
        continue;
      }
      auto dropped = [&](const char* key) {
        std::vector<std::string> v =
            c.value(key, std::vector<std::string>{});
        return join(v, ",");
      };
      html += "<td>" + std::to_string(c.value("n_common", size_t{0})) +
              "</td><td>" + format_fixed(c.value("spearman_rho", 0.0), 4) +
              "</td><td>" + format_fixed(c.value("kendall_tau", 0.0), 4) +
              "</td><td>" + format_fixed(c.value("lcs_ratio", 0.0), 4) +
              "</td><td>" +
              xml_escape(dropped("dropped_ours") + " / " +
                         dropped("dropped_expert")) +
              "</td></tr>\n";
    }
    html += "</table>\n";
  }

  html += "</body>\n</html>\n";
  bundle.files["index.html"] = html;
  return bundle;
}

}  // namespace polscale::report
