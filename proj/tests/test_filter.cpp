#include <catch2/catch_amalgamated.hpp>

#include <atomic>
#include <filesystem>
#include <random>
#include <thread>

#include <httplib.h>

#include "polscale/filter.hpp"

using namespace polscale;
using namespace polscale::corpus;
using namespace polscale::filter;
namespace fs = std::filesystem;

namespace {

Speech speech_with_body(const std::string& id, std::string body) {
  Speech s;
  s.speech_id = id;
  s.date = "2020-05-01";
  s.body = std::move(body);
  return s;
}

fs::path temp_dir(const std::string& tag) {
  auto d = fs::temp_directory_path() / ("polscale_filter_" + tag);
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

}  // namespace

TEST_CASE("segment split keeps the delimiter and reconstructs the body",
          "[segment]") {
  std::string body = "一つ目です。二つ目です。最後は区切りなし";
  auto segs = split_segments(speech_with_body("S", body));
  REQUIRE(segs.size() == 3);
  CHECK(segs[0].text == "一つ目です。");
  CHECK(segs[1].text == "二つ目です。");
  CHECK(segs[2].text == "最後は区切りなし");
  std::string joined;
  for (const auto& s : segs) joined += s.text;
  CHECK(joined == body);
}

TEST_CASE("segment split reconstruction holds for random sentence mixes",
          "[segment]") {
  std::mt19937 gen(7);
  for (int trial = 0; trial < 50; ++trial) {
    std::string body;
    int n = 1 + static_cast<int>(gen() % 10);
    for (int i = 0; i < n; ++i) {
      body += "文" + std::to_string(gen() % 100);
      if (gen() % 4 != 0) body += "。";
    }
    auto segs = split_segments(speech_with_body("S", body));
    std::string joined;
    for (size_t i = 0; i < segs.size(); ++i) {
      CHECK(segs[i].index == static_cast<int>(i));
      CHECK(segs[i].parent_speech_id == "S");
      joined += segs[i].text;
    }
    CHECK(joined == body);
  }
}

TEST_CASE("segment split drops whitespace-only fragments", "[segment]") {
  auto segs = split_segments(speech_with_body("S", "。 。まとも。  "));
  REQUIRE(segs.size() == 1);
  CHECK(segs[0].text == "まとも。");
  CHECK(segs[0].index == 0);

  CHECK(split_segments(speech_with_body("S", "")).empty());
  CHECK(split_segments(speech_with_body("S", "。。。")).empty());
  CHECK(split_segments(speech_with_body("S", "   ")).empty());
}

TEST_CASE("stub classifier labels by marker", "[classify]") {
  auto client = ClassifierClient::parse("stub:marker=★");
  auto labels = client.classify({"★ これは意見です。", "事実の説明。"});
  REQUIRE(labels.size() == 2);
  CHECK(labels[0] == SegmentLabel::Opinion);
  CHECK(labels[1] == SegmentLabel::Other);
}

TEST_CASE("classifier endpoint parsing rejects junk", "[classify]") {
  CHECK_THROWS_AS(ClassifierClient::parse("stub:marker="), ConfigError);
  CHECK_THROWS_AS(ClassifierClient::parse("stub:other=x"), ConfigError);
  CHECK_THROWS_AS(ClassifierClient::parse("ftp://host"), ConfigError);
  CHECK_NOTHROW(ClassifierClient::parse("http://host:1234/classify"));
  CHECK_NOTHROW(ClassifierClient::parse("stub:marker=X"));
}

TEST_CASE("labels are independent of batch size and parallelism",
          "[classify]") {
  std::vector<SpeechSegment> base;
  std::mt19937 gen(11);
  for (int i = 0; i < 157; ++i) {
    SpeechSegment seg;
    seg.parent_speech_id = "S";
    seg.index = i;
    seg.text = (gen() % 3 == 0 ? "★ stance " : "note ") + std::to_string(i);
    base.push_back(seg);
  }

  std::vector<SegmentLabel> reference;
  {
    auto segs = base;
    classify_segments(segs, ClassifierClient::parse("stub:marker=★", 1), 1);
    for (const auto& s : segs) reference.push_back(s.label);
  }
  for (int bs : {2, 7, 64, 500}) {
    for (size_t par : {size_t(1), size_t(4)}) {
      auto segs = base;
      classify_segments(segs, ClassifierClient::parse("stub:marker=★", bs),
                        par);
      for (size_t i = 0; i < segs.size(); ++i)
        CHECK(segs[i].label == reference[i]);
    }
  }
}

TEST_CASE("http classifier round-trips batches and honors the label protocol",
          "[classify][http]") {
  httplib::Server server;
  std::atomic<int> calls{0};
  server.Post("/classify", [&](const httplib::Request& req,
                               httplib::Response& res) {
    ++calls;
    json texts = json::parse(req.body);
    json labels = json::array();
    for (const auto& t : texts)
      labels.push_back(t.get<std::string>().find("OP") != std::string::npos
                           ? "opinion"
                           : "fact");
    res.set_content(labels.dump(), "application/json");
  });
  int port = server.bind_to_any_port("127.0.0.1");
  std::thread th([&] { server.listen_after_bind(); });
  server.wait_until_ready();

  auto client = ClassifierClient::parse(
      "http://127.0.0.1:" + std::to_string(port) + "/classify", 2);
  std::vector<SpeechSegment> segs;
  for (int i = 0; i < 5; ++i) {
    SpeechSegment s;
    s.parent_speech_id = "S";
    s.index = i;
    s.text = i % 2 == 0 ? "OP segment" : "plain segment";
    segs.push_back(s);
  }
  classify_segments(segs, client, 2);
  CHECK(segs[0].label == SegmentLabel::Opinion);
  CHECK(segs[1].label == SegmentLabel::Fact);
  CHECK(segs[4].label == SegmentLabel::Opinion);
  CHECK(calls.load() == 3);  // ceil(5/2) batches

  server.stop();
  th.join();
}

TEST_CASE("http classifier protocol violations raise provider errors",
          "[classify][http]") {
  httplib::Server server;
  server.Post("/short", [](const httplib::Request&, httplib::Response& res) {
    res.set_content("[\"opinion\"]", "application/json");
  });
  server.Post("/junk", [](const httplib::Request&, httplib::Response& res) {
    res.set_content("{\"not\":\"array\"}", "application/json");
  });
  server.Post("/unknown", [](const httplib::Request&, httplib::Response& res) {
    res.set_content("[\"opinion\",\"banana\"]", "application/json");
  });
  int port = server.bind_to_any_port("127.0.0.1");
  std::thread th([&] { server.listen_after_bind(); });
  server.wait_until_ready();
  std::string base = "http://127.0.0.1:" + std::to_string(port);

  auto mk = [&](const std::string& path) {
    auto c = ClassifierClient::parse(base + path, 8);
    c.retry_.max_attempts = 1;  // protocol errors, no point backing off here
    return c;
  };
  CHECK_THROWS_AS(mk("/short").classify({"a", "b"}), ProviderError);
  CHECK_THROWS_AS(mk("/junk").classify({"a", "b"}), ProviderError);
  CHECK_THROWS_AS(mk("/unknown").classify({"a", "b"}), ProviderError);

  server.stop();
  th.join();
}

TEST_CASE("opinion extraction drops speeches with no opinion segment",
          "[opinions]") {
  auto client = ClassifierClient::parse("stub:marker=★");
  std::vector<Speech> speeches = {
      speech_with_body("S-1", "★ 賛成です。背景の説明。★ 反対ではない。"),
      speech_with_body("S-2", "事実だけ。数字の話。"),
      speech_with_body("S-3", "★ 意見"),
  };
  speeches[0].speaker_id = "a";
  speeches[1].speaker_id = "b";
  speeches[2].speaker_id = "c";

  auto records = extract_opinions(speeches, client);
  REQUIRE(records.size() == 2);
  CHECK(records[0].speech_id == "S-1");
  REQUIRE(records[0].extracted_opinions.size() == 2);
  CHECK(records[0].extracted_opinions[0] == "★ 賛成です。");
  CHECK(records[0].extracted_opinions[1] == "★ 反対ではない。");
  CHECK(records[0].opinion_segment_indices == std::vector<int>{0, 2});
  CHECK(records[1].speech_id == "S-3");

  // the segments on the input speeches carry labels afterwards
  CHECK(speeches[0].segments[0].label == SegmentLabel::Opinion);
  CHECK(speeches[0].segments[1].label == SegmentLabel::Other);
  CHECK(speeches[1].segments[0].label == SegmentLabel::Other);
}

TEST_CASE("opinion records round-trip through jsonl", "[opinions]") {
  auto dir = temp_dir("roundtrip");
  OpinionRecord r;
  r.speech_id = "S-9";
  r.house_name = "House of Councillors";
  r.meeting_name = "Plenary";
  r.date = "2013-04-02";
  r.speech_url = "https://example.invalid/S-9";
  r.speaker_id = "member x";
  r.speaker_group = "P2";
  r.topic = "nuclear";
  r.extracted_opinions = {"★ 一つ。", "★ 二つ。"};
  r.opinion_segment_indices = {0, 3};

  save_opinions(dir / "opinions.jsonl", {r});
  auto back = load_opinions(dir / "opinions.jsonl");
  REQUIRE(back.size() == 1);
  CHECK(back[0] == r);
}
