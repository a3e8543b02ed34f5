// octopus command line: analyze, report, phantom, register, serve, train.
// Exit codes: 0 success, 2 format error (bad input files or config), 3 pipeline failure.

#include <csignal>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "octopus/octopus.hpp"

namespace fs = std::filesystem;
using namespace octopus;
using nlohmann::json;

namespace {

constexpr int kOk = 0;
constexpr int kFormat = 2;
constexpr int kPipeline = 3;

Roi parse_roi(const std::string& s) {
  const auto colon = s.find(':');
  if (colon == std::string::npos) throw ConfigError("roi must be first:last");
  try {
    std::size_t p1 = 0, p2 = 0;
    const std::string a = s.substr(0, colon), b = s.substr(colon + 1);
    Roi r{std::stoi(a, &p1), std::stoi(b, &p2)};
    if (p1 != a.size() || p2 != b.size()) throw ConfigError("roi must be first:last");
    if (r.first < 0 || r.last < r.first) throw ConfigError("roi: need 0 <= first <= last");
    return r;
  } catch (const std::logic_error&) {
    throw ConfigError("roi must be first:last");
  }
}

std::pair<int, int> parse_pair(const std::string& s) {
  const auto comma = s.find(',');
  if (comma == std::string::npos) throw InvalidLandmarks("landmarks must be r1,r2:f1,f2");
  try {
    return {std::stoi(s.substr(0, comma)), std::stoi(s.substr(comma + 1))};
  } catch (const std::logic_error&) {
    throw InvalidLandmarks("landmarks must be r1,r2:f1,f2");
  }
}

/// Current labels of a pullback directory: the last analysis where present
/// (frames outside its ROI stay background), else labels.raw beside the data.
LabelVolume current_labels(const fs::path& dir, const io::Meta& m) {
  const auto analysis = dir / "analysis";
  if (fs::exists(analysis / "labels.raw") && fs::exists(analysis / "summary.json")) {
    const auto summary = json::parse(io::read_text(analysis / "summary.json"));
    const int first = summary.at("roi")[0].get<int>(), last = summary.at("roi")[1].get<int>();
    const auto roi = io::load_labels(analysis / "labels.raw", last - first + 1, m.n_alines, m.n_r);
    LabelVolume v(m.n_frames, m.n_alines, m.n_r);
    for (int f = first; f <= last; ++f) v.frames[f] = roi.frames[f - first];
    return v;
  }
  if (fs::exists(dir / "labels.raw")) return io::load_labels(dir / "labels.raw", m.n_frames, m.n_alines, m.n_r);
  throw InvalidArgument("no labels in " + dir.string() + " (run analyze first)");
}

template <typename Fn>
int run_guarded(Fn fn) {
  try {
    return fn();
  } catch (const FormatError& e) {
    std::cerr << "format error: " << e.what() << "\n";
    return kFormat;
  } catch (const VersionMismatch& e) {
    std::cerr << "format error: " << e.what() << "\n";
    return kFormat;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kFormat;
  } catch (const SpecInvalid& e) {
    std::cerr << "spec error: " << e.what() << "\n";
    return kFormat;
  } catch (const json::exception& e) {
    std::cerr << "format error: " << e.what() << "\n";
    return kFormat;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kPipeline;
  }
}

int cmd_analyze(const fs::path& dir, const std::string& config_path, const std::string& mode,
                const std::string& roi, std::string out, const std::string& probs, int threads, bool quiet) {
  PipelineConfig cfg;
  if (!config_path.empty()) cfg = parse_config_text(io::read_text(config_path));
  if (!mode.empty()) cfg.mode = parse_mode(mode);
  if (!roi.empty()) cfg.roi = parse_roi(roi);
  if (threads >= 0) cfg.threads = threads;
  const Pullback pb = io::load_pullback(dir);
  std::optional<plaque::ExternalProbabilities> external;
  if (!probs.empty())
    external.emplace(io::load_probs(probs, pb.n_frames(), pb.n_alines, pb.n_r), "external:" + probs);
  const fs::path out_dir = out.empty() ? dir / "analysis" : fs::path(out);
  pipeline::ProgressFn progress;
  if (!quiet)
    progress = [](const pipeline::ProgressEvent& e) {
      if (e.done == e.total) std::fprintf(stderr, "[%s] done\n", e.stage.c_str());
      else std::fprintf(stderr, "[%s] %d frames\n", e.stage.c_str(), e.total);
    };
  const auto art = pipeline::run_pipeline(pb, cfg, {external ? &*external : nullptr, nullptr}, progress);
  pipeline::write_artifacts(out_dir, art, cfg, pb.n_alines);
  for (const auto& w : art.warnings) std::fprintf(stderr, "warning: %s\n", w.c_str());
  std::printf("analyzed %d frames in %.2f s (%.3f s/frame); %zu lesions", art.n_frames(), art.total_seconds(),
              art.total_seconds() / art.n_frames(), art.lesions.size());
  if (art.stent_report) std::printf("; %d struts", art.stent_report->struts);
  std::printf("; outputs in %s\n", out_dir.string().c_str());
  return kOk;
}

int cmd_report(const fs::path& dir, std::string out) {
  const auto m = io::read_meta(dir);
  const auto labels = current_labels(dir, m);
  const fs::path out_dir = out.empty() ? dir / "report" : fs::path(out);
  fs::create_directories(out_dir);
  std::vector<quant::FrameQuant> frames(m.n_frames);
  std::vector<bool> gate(m.n_frames);
  std::vector<Contour> contours(m.n_frames);
  for (int f = 0; f < m.n_frames; ++f) {
    frames[f] = quant::frame_quant(f, labels.frames[f], m.calibration);
    const auto& d = labels.frames[f].data();
    gate[f] = frames[f].gated = std::find(d.begin(), d.end(), code(Label::calcium)) != d.end();
    contours[f] = quant::contour_from_labels(labels.frames[f]);
  }
  const auto lesions = quant::lesion_quant(frames, gate, m.calibration);
  io::write_text(out_dir / "quant.csv", io::frame_csv(frames));
  io::write_text(out_dir / "lesions.csv", io::lesion_csv(lesions));
  const auto enface = quant::enface_maps(labels, contours, m.calibration, 360);
  for (const char* k : {"angle", "thickness", "depth"})
    io::write_text(out_dir / (std::string("enface_") + k + ".png"),
                   png::encode_gray(pipeline::enface_image(enface, k)));
  std::printf("report for %d frames, %zu lesions, in %s\n", m.n_frames, lesions.size(), out_dir.string().c_str());
  return kOk;
}

int cmd_phantom(const std::string& spec_path, std::uint64_t seed, const fs::path& out) {
  phantom::PhantomSpec spec;
  try {
    spec = json::parse(io::read_text(spec_path)).get<phantom::PhantomSpec>();
  } catch (const json::exception& e) {
    throw SpecInvalid(std::string("phantom spec: ") + e.what());
  }
  phantom::validate(spec);
  const auto ph = phantom::generate(spec, seed);
  io::save_phantom(out, spec, seed, ph);
  std::printf("phantom %s: %d frames, %zu struts, written to %s\n", ph.pullback.id.c_str(), ph.pullback.n_frames(),
              ph.truth.struts.size(), out.string().c_str());
  return kOk;
}

int cmd_register(const fs::path& ref, const fs::path& flt, const std::string& landmarks, int max_offset,
                 const fs::path& out) {
  const auto mr = io::read_meta(ref), mf = io::read_meta(flt);
  registration::RegistrationResult r;
  if (!landmarks.empty()) {
    const auto colon = landmarks.find(':');
    if (colon == std::string::npos) throw InvalidLandmarks("landmarks must be r1,r2:f1,f2");
    r = registration::register_landmark(parse_pair(landmarks.substr(0, colon)), parse_pair(landmarks.substr(colon + 1)),
                                        mr.n_frames, mf.n_frames);
  } else {
    registration::AutoOptions o;
    o.max_offset = max_offset;
    r = registration::register_auto(registration::thickness_signal(current_labels(ref, mr), mr.calibration, "ref"),
                                    registration::thickness_signal(current_labels(flt, mf), mf.calibration, "float"),
                                    o);
  }
  const auto j = registration::to_json(r);
  io::write_text(out, j.dump(2) + "\n");
  std::printf("%s\n", j.dump(2).c_str());
  for (const auto& w : r.warnings) std::fprintf(stderr, "warning: %s\n", w.c_str());
  return kOk;
}

service::Service* g_service = nullptr;

int cmd_serve(const fs::path& root, const std::string& host, int port, const std::string& static_dir,
              const std::string& config_path) {
  service::Options opt;
  opt.root = root;
  opt.static_dir = static_dir;
  if (!config_path.empty()) opt.config = parse_config_text(io::read_text(config_path));
  service::Service svc(opt);
  g_service = &svc;
  std::signal(SIGINT, [](int) {
    if (g_service) g_service->stop();
  });
  std::signal(SIGTERM, [](int) {
    if (g_service) g_service->stop();
  });
  std::fprintf(stderr, "serving %s on http://%s:%d\n", root.string().c_str(), host.c_str(), port);
  if (!svc.listen(host, port)) throw Error("cannot listen on " + host + ":" + std::to_string(port));
  g_service = nullptr;
  return kOk;
}

int cmd_train(const fs::path& out, const std::vector<std::uint64_t>& seeds, int frames, std::uint64_t train_seed) {
  training::CorpusSpec spec;
  if (!seeds.empty()) spec.seeds = seeds;
  if (frames > 0) spec.options.n_frames = frames;
  spec.train_seed = train_seed;
  const auto models = training::train_models(spec);
  fs::create_directories(out);
  ml::save(models.detector, (out / "detector.octm").string());
  ml::save(models.coverage, (out / "coverage.octm").string());
  std::printf("detector: %s\ncoverage: %s\n", models.detector.meta.dump().c_str(), models.coverage.meta.dump().c_str());
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"octopus: IVOCT plaque and stent analysis"};
  app.require_subcommand(1);

  auto* analyze = app.add_subcommand("analyze", "run the full pipeline on a pullback directory");
  std::string a_dir, a_config, a_mode, a_roi, a_out, a_probs;
  int a_threads = -1;
  bool a_quiet = false;
  analyze->add_option("dir", a_dir, "pullback directory (meta.json + frames.raw)")->required();
  analyze->add_option("--config", a_config, "JSON config");
  analyze->add_option("--mode", a_mode, "baseline | followup | stent");
  analyze->add_option("--roi", a_roi, "frame range first:last (inclusive)");
  analyze->add_option("--out", a_out, "output directory (default <dir>/analysis)");
  analyze->add_option("--probs", a_probs, "external calcium probabilities (probs.raw)");
  analyze->add_option("--threads", a_threads, "worker threads (0: all cores)");
  analyze->add_flag("--quiet", a_quiet, "no progress output");

  auto* report = app.add_subcommand("report", "quant tables and en face maps from the current labels");
  std::string r_dir, r_out;
  report->add_option("dir", r_dir, "pullback directory")->required();
  report->add_option("--out", r_out, "output directory (default <dir>/report)");

  auto* ph = app.add_subcommand("phantom", "generate a synthetic pullback with ground truth");
  std::string p_spec, p_out;
  std::uint64_t p_seed = 0;
  ph->add_option("--spec", p_spec, "phantom spec JSON")->required();
  ph->add_option("--seed", p_seed, "random seed")->required();
  ph->add_option("--out", p_out, "output directory")->required();

  auto* reg = app.add_subcommand("register", "co-register two pullbacks");
  std::string g_ref, g_float, g_landmarks, g_out = "reg.json";
  int g_max = -1;
  reg->add_option("--ref", g_ref, "reference pullback directory")->required();
  reg->add_option("--float", g_float, "floating pullback directory")->required();
  reg->add_option("--landmarks", g_landmarks, "r1,r2:f1,f2 (landmark mode)");
  reg->add_option("--max-offset", g_max, "search range in frames (automatic mode)");
  reg->add_option("--out", g_out, "result file");

  auto* serve = app.add_subcommand("serve", "HTTP service for the viewer");
  std::string s_root = ".", s_host = "127.0.0.1", s_static, s_config;
  int s_port = 8080;
  serve->add_option("--root", s_root, "directory of pullback directories");
  serve->add_option("--host", s_host, "listen address");
  serve->add_option("--port", s_port, "listen port");
  serve->add_option("--static", s_static, "viewer assets to serve at /");
  serve->add_option("--config", s_config, "default pipeline config");

  auto* train = app.add_subcommand("train", "train strut detector and coverage models on phantoms");
  std::string t_out = "models";
  std::vector<std::uint64_t> t_seeds;
  int t_frames = 0;
  std::uint64_t t_seed = 11;
  train->add_option("--out", t_out, "output directory");
  train->add_option("--seeds", t_seeds, "phantom seeds")->delimiter(',');
  train->add_option("--frames", t_frames, "frames per phantom");
  train->add_option("--train-seed", t_seed, "split and bagging seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kFormat;
  }

  return run_guarded([&] {
    if (*analyze) return cmd_analyze(a_dir, a_config, a_mode, a_roi, a_out, a_probs, a_threads, a_quiet);
    if (*report) return cmd_report(r_dir, r_out);
    if (*ph) return cmd_phantom(p_spec, p_seed, p_out);
    if (*reg) return cmd_register(g_ref, g_float, g_landmarks, g_max, g_out);
    if (*serve) return cmd_serve(s_root, s_host, s_port, s_static, s_config);
    return cmd_train(t_out, t_seeds, t_frames, t_seed);
  });
}
