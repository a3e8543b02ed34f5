#include <gtest/gtest.h>

#include <thread>

#include "helpers.hpp"
#include "httplib.h"
#include "oracles.hpp"
#include "octopus/io.hpp"
#include "octopus/service.hpp"

using namespace octopus;
using nlohmann::json;

namespace {

struct Running {
  explicit Running(service::Options opt) : svc(std::move(opt)) {
    port = svc.bind_any();
    thread = std::thread([this] { svc.listen_after_bind(); });
    cli = std::make_unique<httplib::Client>("127.0.0.1", port);
    cli->set_read_timeout(120, 0);
  }
  ~Running() {
    svc.stop();
    thread.join();
  }
  service::Service svc;
  int port = 0;
  std::thread thread;
  std::unique_ptr<httplib::Client> cli;
};

const phantom::Phantom& phantom_a() {
  static const phantom::Phantom ph = phantom::generate(testing_helpers::small_spec(41, 10, 128, 700), 41);
  return ph;
}

httplib::Headers rev(std::uint64_t r) { return {{"X-Revision", std::to_string(r)}}; }

std::uint64_t current_rev(httplib::Client& c, const std::string& id) {
  return json::parse(c.Get("/pullbacks/" + id)->body)["revision"].get<std::uint64_t>();
}

LabelFrame get_labels(httplib::Client& c, const std::string& id, int f, int rows, int cols) {
  auto r = c.Get("/pullbacks/" + id + "/labels/" + std::to_string(f));
  EXPECT_EQ(r->status, 200);
  LabelFrame out(rows, cols);
  EXPECT_EQ(r->body.size(), out.size());
  std::copy(r->body.begin(), r->body.end(), out.data().begin());
  return out;
}

std::unique_ptr<Running> start() {
  service::Options o;
  o.write_outputs = false;
  auto r = std::make_unique<Running>(o);
  auto pb = phantom_a().pullback;
  pb.id = "a";
  r->svc.add(pb, phantom_a().truth.labels);
  return r;
}

}  // namespace

TEST(Service, ListsAndDescribesPullbacks) {
  auto s = start();
  auto r = s->cli->Get("/pullbacks");
  ASSERT_EQ(r->status, 200);
  const auto j = json::parse(r->body);
  ASSERT_EQ(j.size(), 1u);
  EXPECT_EQ(j[0]["id"], "a");
  EXPECT_EQ(j[0]["n_alines"], 128);
  EXPECT_EQ(s->cli->Get("/pullbacks/nope")->status, 404);
  EXPECT_EQ(s->cli->Get("/pullbacks/a/labels/10")->status, 404);
}

TEST(Service, BrushStrokeRasterizesExactly) {
  auto s = start();
  const auto before = get_labels(*s->cli, "a", 2, 128, 700);
  const json edit{{"tool", "brush"}, {"class", "lipid"}, {"points", {{20, 400}, {20, 430}}}, {"radius", 3}};
  auto r = s->cli->Put("/pullbacks/a/labels/2", rev(0), edit.dump(), "application/json");
  ASSERT_EQ(r->status, 200);
  EXPECT_EQ(json::parse(r->body)["revision"], 1);
  const auto after = get_labels(*s->cli, "a", 2, 128, 700);
  // Straight stroke: every pixel within distance 2 of the segment row 20, cols 400..430.
  for (int a = 0; a < 128; ++a)
    for (int c = 0; c < 700; ++c) {
      const int dc = c < 400 ? 400 - c : (c > 430 ? c - 430 : 0);
      const bool in = (a - 20) * (a - 20) + dc * dc <= 4;
      ASSERT_EQ(after(a, c), in ? code(Label::lipid) : before(a, c)) << a << "," << c;
    }
}

TEST(Service, StaleRevisionConflictsAndRetryIsIdempotent) {
  auto s = start();
  const json e1{{"tool", "brush"}, {"class", "calcium"}, {"points", {{5, 300}}}};
  const json e2{{"tool", "brush"}, {"class", "other"}, {"points", {{6, 300}}}};
  auto r1 = s->cli->Put("/pullbacks/a/labels/1", rev(0), e1.dump(), "application/json");
  auto r2 = s->cli->Put("/pullbacks/a/labels/1", rev(0), e2.dump(), "application/json");
  EXPECT_EQ(r1->status, 200);
  EXPECT_EQ(r2->status, 409);
  EXPECT_EQ(json::parse(r2->body)["revision"], 1);
  auto retry = s->cli->Put("/pullbacks/a/labels/1", rev(0), e1.dump(), "application/json");
  EXPECT_EQ(retry->status, 200);
  EXPECT_EQ(json::parse(retry->body)["replayed"], true);
  EXPECT_EQ(current_rev(*s->cli, "a"), 1u);
  auto t = json::parse(s->cli->Get("/pullbacks/a/transcript")->body);
  EXPECT_EQ(t["edits"].size(), 1u);
}

TEST(Service, ConcurrentWritersOneWins) {
  auto s = start();
  std::vector<int> status(8);
  std::vector<std::thread> ts;
  for (int k = 0; k < 8; ++k)
    ts.emplace_back([&, k] {
      httplib::Client c("127.0.0.1", s->port);
      const json e{{"tool", "brush"}, {"class", "calcium"}, {"points", {{k, 300}}}};
      status[k] = c.Put("/pullbacks/a/labels/0", rev(0), e.dump(), "application/json")->status;
    });
  for (auto& t : ts) t.join();
  EXPECT_EQ(std::count(status.begin(), status.end(), 200), 1);
  EXPECT_EQ(std::count(status.begin(), status.end(), 409), 7);
}

TEST(Service, RequestErrorsMapToStatusCodes) {
  auto s = start();
  const std::string ok = json{{"tool", "fill"}, {"class", "lumen"}, {"points", {{1, 1}}}}.dump();
  EXPECT_EQ(s->cli->Put("/pullbacks/a/labels/0", ok, "application/json")->status, 428);
  EXPECT_EQ(s->cli->Put("/pullbacks/a/labels/0", {{"X-Revision", "x"}}, ok, "application/json")->status, 400);
  EXPECT_EQ(s->cli->Put("/pullbacks/b/labels/0", rev(0), ok, "application/json")->status, 404);
  const std::string bad_class = json{{"tool", "fill"}, {"class", "stent"}, {"points", {{1, 1}}}}.dump();
  EXPECT_EQ(s->cli->Put("/pullbacks/a/labels/0", rev(0), bad_class, "application/json")->status, 422);
  const std::string outside = json{{"tool", "brush"}, {"class", "lumen"}, {"points", {{500, 1}}}}.dump();
  EXPECT_EQ(s->cli->Put("/pullbacks/a/labels/0", rev(0), outside, "application/json")->status, 422);
  EXPECT_EQ(s->cli->Put("/pullbacks/a/labels/0", rev(0), "{", "application/json")->status, 400);
  EXPECT_EQ(s->cli->Put("/pullbacks/a/labels/0", rev(0), std::string(10, '\0'), "application/octet-stream")->status,
            422);
  EXPECT_EQ(s->cli->Get("/pullbacks/a/enface?map=x")->status, 400);
  EXPECT_EQ(s->cli->Get("/pullbacks/a/longitudinal")->status, 400);
  EXPECT_EQ(s->cli->Post("/pullbacks/a/analyze", R"({"roi": [0, 99]})", "application/json")->status, 422);
  EXPECT_EQ(s->cli->Get("/jobs/999")->status, 404);
}

TEST(Service, RawFrameReplacement) {
  auto s = start();
  std::string body(128 * 700, '\0');
  body[5] = 2;
  auto r = s->cli->Put("/pullbacks/a/labels/4", rev(0), body, "application/octet-stream");
  ASSERT_EQ(r->status, 200);
  const auto f = get_labels(*s->cli, "a", 4, 128, 700);
  EXPECT_EQ(f(0, 5), 2);
  EXPECT_EQ(f(0, 4), 0);
}

TEST(Service, QuantFollowsEdits) {
  auto s = start();
  const json edit{{"tool", "freehand"}, {"class", "calcium"}, {"points", {{10, 400}, {10, 460}, {40, 460}, {40, 400}}}};
  ASSERT_EQ(s->cli->Put("/pullbacks/a/labels/7", rev(0), edit.dump(), "application/json")->status, 200);
  const auto labels = get_labels(*s->cli, "a", 7, 128, 700);
  const auto want = oracle::frame_quant(labels, Calibration{});
  const auto q = json::parse(s->cli->Get("/pullbacks/a/quant/7")->body);
  EXPECT_NEAR(q["lumen_area_mm2"].get<double>(), want.area_mm2, 1e-9);
  EXPECT_NEAR(q["calc_angle_deg"].get<double>(), want.angle_deg, 360.0 / 128 + 1e-9);
  EXPECT_NEAR(q["calc_thick_mm"].get<double>(), *want.max_thick_mm, 0.005 + 1e-9);
  EXPECT_EQ(q["gated"], true);
  const auto rows = io::parse_csv(s->cli->Get("/pullbacks/a/quant.csv")->body);
  ASSERT_EQ(rows.size(), 11u);
  EXPECT_EQ(rows[8][8], "1");
  EXPECT_NEAR(std::stod(rows[8][5]), q["calc_angle_deg"].get<double>(), 0.01);
}

TEST(Service, AnalysisReplacesLabelsAndBlocksWrites) {
  auto s = start();
  std::mutex gate;
  gate.lock();
  s->svc.queue().submit("blocker", [&](const pipeline::ProgressFn&) { std::lock_guard l(gate); });
  auto r = s->cli->Post("/pullbacks/a/analyze", R"({"roi": [2, 7]})", "application/json");
  ASSERT_EQ(r->status, 202);
  const int job = json::parse(r->body)["job"];
  EXPECT_EQ(s->cli->Post("/pullbacks/a/analyze", "", "application/json")->status, 503);
  const std::string e = json{{"tool", "fill"}, {"class", "lumen"}, {"points", {{1, 1}}}}.dump();
  EXPECT_EQ(s->cli->Put("/pullbacks/a/labels/0", rev(0), e, "application/json")->status, 503);
  EXPECT_EQ(json::parse(s->cli->Get("/jobs/" + std::to_string(job))->body)["status"], "queued");
  gate.unlock();
  s->svc.queue().wait(job);
  const auto info = json::parse(s->cli->Get("/jobs/" + std::to_string(job))->body);
  EXPECT_EQ(info["status"], "done");
  EXPECT_DOUBLE_EQ(info["progress"].get<double>(), 1.0);
  EXPECT_TRUE(info["timings_s"].contains("lumen"));
  EXPECT_EQ(current_rev(*s->cli, "a"), 1u);
  // Frames outside the ROI keep their labels.
  const auto f0 = get_labels(*s->cli, "a", 0, 128, 700);
  EXPECT_EQ(f0.data(), phantom_a().truth.labels.frames[0].data());
  EXPECT_EQ(s->cli->Put("/pullbacks/a/labels/0", rev(1), e, "application/json")->status, 200);
  auto struts = json::parse(s->cli->Get("/pullbacks/a/struts")->body);
  EXPECT_TRUE(struts["struts"].empty());
  EXPECT_TRUE(struts["summary"].is_null());
}

TEST(Service, ImagesArePng) {
  auto s = start();
  for (const std::string path :
       {"/pullbacks/a/frames/3", "/pullbacks/a/frames/3?view=rtheta&overlay=1", "/pullbacks/a/frames/3?overlay=1&size=64",
        "/pullbacks/a/enface?map=thickness", "/pullbacks/a/longitudinal?angle=45&overlay=1"}) {
    auto r = s->cli->Get(path);
    ASSERT_EQ(r->status, 200) << path;
    EXPECT_EQ(r->body.substr(1, 3), "PNG") << path;
  }
  EXPECT_EQ(s->cli->Get("/pullbacks/a/frames/3?view=polar")->status, 400);
}

TEST(Service, AnnotationsRoundTrip) {
  auto s = start();
  const json notes = json::array({{{"x", 3}, {"text", "check"}}});
  EXPECT_EQ(s->cli->Put("/pullbacks/a/annotations/2", notes.dump(), "application/json")->status, 200);
  EXPECT_EQ(json::parse(s->cli->Get("/pullbacks/a/annotations/2")->body), notes);
  EXPECT_EQ(json::parse(s->cli->Get("/pullbacks/a/annotations/3")->body), json::array());
  EXPECT_EQ(s->cli->Put("/pullbacks/a/annotations/2", "{}", "application/json")->status, 422);
}

TEST(Service, RegistrationEndpoint) {
  auto s = start();
  auto pb = phantom_a().pullback;
  pb.id = "b";
  s->svc.add(pb, phantom::shift_frames(phantom_a().truth.labels, 0));
  auto r = s->cli->Post("/registration", R"({"ref":"a","float":"b","mode":"landmark","landmarks":{"ref":[4,8],"float":[2,6]}})",
                        "application/json");
  ASSERT_EQ(r->status, 200);
  EXPECT_EQ(json::parse(r->body)["offset_frames"], 2);
  r = s->cli->Post("/registration", R"({"ref":"a","float":"b","max_offset":3,"min_overlap":5})", "application/json");
  ASSERT_EQ(r->status, 200) << r->body;
  EXPECT_EQ(json::parse(r->body)["offset_frames"], 0);
  EXPECT_EQ(s->cli->Post("/registration", R"({"ref":"a","float":"b","mode":"landmark","landmarks":{"ref":[4,4],"float":[2,6]}})",
                         "application/json")->status,
            422);
  EXPECT_EQ(s->cli->Post("/registration", R"({"ref":"a","float":"b"})", "application/json")->status, 422);
  EXPECT_EQ(s->cli->Post("/registration", R"({"ref":"a","float":"zz"})", "application/json")->status, 404);
}

TEST(Service, ScansDirectoryRoot) {
  const auto root = testing_helpers::temp_dir("svc_root");
  auto pb = phantom_a().pullback;
  pb.id = "disk";
  io::save_pullback(root / "disk", pb);
  std::filesystem::create_directories(root / "not_a_pullback");
  service::Options o;
  o.root = root;
  Running s(o);
  const auto j = json::parse(s.cli->Get("/pullbacks")->body);
  ASSERT_EQ(j.size(), 1u);
  EXPECT_EQ(j[0]["id"], "disk");
  EXPECT_EQ(s.cli->Get("/pullbacks/disk/labels/0")->body.size(), 128u * 700);
}
