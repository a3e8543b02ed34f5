#pragma once

// Local HTTP service for the viewer: pullbacks, analysis jobs, frame images,
// label editing with optimistic revisions, quant, en face, longitudinal views,
// registration and strut records. See docs/api.md for the wire format.

#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <regex>
#include <string>
#include <vector>

#include "httplib.h"
#include "json.hpp"
#include "octopus/config.hpp"
#include "octopus/io.hpp"
#include "octopus/pipeline.hpp"
#include "octopus/png.hpp"
#include "octopus/quant.hpp"
#include "octopus/raster.hpp"
#include "octopus/registration.hpp"

namespace octopus::service {

namespace fs = std::filesystem;
using nlohmann::json;

class HttpError : public Error {
 public:
  HttpError(int status, const std::string& what) : Error(what), status_(status) {}
  int status() const noexcept { return status_; }

 private:
  int status_;
};

inline constexpr const char* kRevisionHeader = "X-Revision";

struct TranscriptEntry {
  std::uint64_t revision = 0;  // revision produced by this entry
  std::optional<raster::Edit> edit;
  std::optional<LabelFrame> replacement;  // raw frame upload
  int frame = 0;
};

struct WriteRecord {
  int frame = 0;
  std::string content_type;
  std::string body;
  std::uint64_t to = 0;
};

struct Entry {
  std::string id;
  fs::path dir;  // empty for in-memory pullbacks
  io::Meta meta;
  std::shared_ptr<const Pullback> data;
  LabelVolume base;
  LabelVolume labels;
  std::uint64_t revision = 0;
  std::vector<TranscriptEntry> transcript;
  std::map<std::uint64_t, WriteRecord> writes;  // keyed by the revision the write was based on
  std::shared_ptr<const pipeline::Artifacts> analysis;
  std::optional<int> active_job;
  std::map<int, json> annotations;
  std::mutex mu;
};

struct Options {
  fs::path root;  // every subdirectory holding meta.json is a pullback
  fs::path static_dir;
  PipelineConfig config;
  const stent::StentModels* models = nullptr;
  bool write_outputs = true;  // analysis artifacts to <pullback>/analysis
  int http_threads = 4;
};

/// Current labels replayed from the transcript; equals Entry::labels.
inline LabelVolume replay(const Entry& e) {
  LabelVolume v = e.base;
  for (const auto& t : e.transcript) {
    if (t.edit) raster::apply(v.frames[t.frame], *t.edit);
    else v.frames[t.frame] = *t.replacement;
  }
  return v;
}

/// Per-frame quant from labels only. A frame counts as gated when it holds
/// calcium pixels, so edited and automated labels are treated alike.
inline std::vector<quant::FrameQuant> label_quant(const LabelVolume& labels, const Calibration& cal,
                                                  const pipeline::Artifacts* analysis) {
  std::vector<quant::FrameQuant> out(labels.n_frames());
  parallel_for(labels.n_frames(), [&](int f) {
    auto q = quant::frame_quant(f, labels.frames[f], cal);
    const auto& d = labels.frames[f].data();
    q.gated = std::find(d.begin(), d.end(), code(Label::calcium)) != d.end();
    if (analysis && f >= analysis->first_frame && f <= analysis->last_frame)
      q.flags.segmentation_failed = analysis->frames[f - analysis->first_frame].flags.segmentation_failed;
    out[f] = q;
  });
  return out;
}

inline json strut_json(const stent::StrutRecord& s, int n_alines) {
  return {{"frame", s.frame},
          {"aline", s.aline},
          {"angle_deg", s.aline_pos * 360.0 / n_alines},
          {"center_px", s.center_px},
          {"lead_px", s.lead_px},
          {"bloom_extent_px", s.bloom_extent_px},
          {"shadow_width_alines", s.width_alines},
          {"score", s.score},
          {"covered", s.covered},
          {"coverage_um", s.coverage_um},
          {"malapposition_um", s.malapposition_um},
          {"malapposed", s.malapposed}};
}

class Service {
 public:
  explicit Service(Options opt) : opt_(std::move(opt)) {
    if (!opt_.root.empty()) scan();
    const int threads = std::max(1, opt_.http_threads);
    http_.new_task_queue = [threads] { return new httplib::ThreadPool(threads); };
    routes();
    if (!opt_.static_dir.empty()) http_.set_mount_point("/", opt_.static_dir.string());
  }

  /// Registers every pullback directory under the root. Existing ids keep their state.
  void scan() {
    if (!fs::is_directory(opt_.root)) throw InvalidArgument("not a directory: " + opt_.root.string());
    std::vector<fs::path> dirs;
    for (const auto& d : fs::directory_iterator(opt_.root))
      if (d.is_directory() && fs::exists(d.path() / "meta.json")) dirs.push_back(d.path());
    std::sort(dirs.begin(), dirs.end());
    std::lock_guard lock(mu_);
    for (const auto& d : dirs) {
      const std::string id = d.filename().string();
      if (entries_.count(id)) continue;
      auto e = std::make_shared<Entry>();
      e->id = id;
      e->dir = d;
      e->meta = io::read_meta(d);
      entries_[id] = e;
    }
  }

  /// In-memory pullback; returns its id.
  std::string add(Pullback pb, std::optional<LabelVolume> labels = std::nullopt) {
    pb.validate();
    auto e = std::make_shared<Entry>();
    e->id = pb.id.empty() ? "pb" + std::to_string(entries_.size() + 1) : pb.id;
    e->meta = {e->id, pb.n_frames(), pb.n_alines, pb.n_r, pb.calibration};
    if (labels) {
      if (!labels->matches(pb)) throw InvalidArgument("labels do not match the pullback");
      e->base = std::move(*labels);
    } else {
      e->base = LabelVolume(pb.n_frames(), pb.n_alines, pb.n_r);
    }
    e->labels = e->base;
    e->data = std::make_shared<const Pullback>(std::move(pb));
    std::lock_guard lock(mu_);
    if (entries_.count(e->id)) throw InvalidArgument("duplicate pullback id " + e->id);
    entries_[e->id] = e;
    return e->id;
  }

  httplib::Server& http() { return http_; }
  pipeline::JobQueue& queue() { return queue_; }

  int bind_any(const std::string& host = "127.0.0.1") { return http_.bind_to_any_port(host); }
  bool listen(const std::string& host, int port) { return http_.listen(host, port); }
  bool listen_after_bind() { return http_.listen_after_bind(); }
  void stop() { http_.stop(); }

 private:
  std::shared_ptr<Entry> find(const std::string& id) {
    std::lock_guard lock(mu_);
    const auto it = entries_.find(id);
    if (it == entries_.end()) throw HttpError(404, "unknown pullback '" + id + "'");
    return it->second;
  }

  /// Loads pixel data and labels on first use. Caller holds e.mu.
  static void ensure_loaded(Entry& e) {
    if (e.data) return;
    e.data = std::make_shared<const Pullback>(io::load_pullback(e.dir));
    const auto& m = e.meta;
    if (fs::exists(e.dir / "labels.raw"))
      e.base = io::load_labels(e.dir / "labels.raw", m.n_frames, m.n_alines, m.n_r);
    else
      e.base = LabelVolume(m.n_frames, m.n_alines, m.n_r);
    e.labels = e.base;
  }

  static int frame_index(const Entry& e, const std::string& s) {
    long n = -1;
    try {
      n = std::stol(s);
    } catch (const std::exception&) {
    }
    if (n < 0 || n >= e.meta.n_frames) throw HttpError(404, "frame " + s + " out of range");
    return static_cast<int>(n);
  }

  static void send_json(httplib::Response& res, const json& j, int status = 200) {
    res.status = status;
    res.set_content(j.dump(), "application/json");
  }

  template <typename Fn>
  static httplib::Server::Handler guard(Fn fn) {
    return [fn](const httplib::Request& req, httplib::Response& res) {
      try {
        fn(req, res);
      } catch (const HttpError& e) {
        send_json(res, {{"error", e.what()}}, e.status());
      } catch (const json::exception& e) {
        send_json(res, {{"error", std::string("bad JSON: ") + e.what()}}, 400);
      } catch (const InvalidArgument& e) {
        send_json(res, {{"error", e.what()}}, 422);
      } catch (const InvalidLandmarks& e) {
        send_json(res, {{"error", e.what()}}, 422);
      } catch (const DegenerateSignal& e) {
        send_json(res, {{"error", e.what()}}, 422);
      } catch (const ConfigError& e) {
        send_json(res, {{"error", e.what()}}, 422);
      } catch (const FormatError& e) {
        send_json(res, {{"error", e.what()}}, 422);
      } catch (const std::exception& e) {
        send_json(res, {{"error", e.what()}}, 500);
      }
    };
  }

  static json meta_json(Entry& e) {
    std::lock_guard lock(e.mu);
    return {{"id", e.id},
            {"n_frames", e.meta.n_frames},
            {"n_alines", e.meta.n_alines},
            {"n_r", e.meta.n_r},
            {"r_pixel_um", e.meta.calibration.r_pixel_um},
            {"frame_spacing_mm", e.meta.calibration.frame_spacing_mm},
            {"revision", e.revision},
            {"analyzed", static_cast<bool>(e.analysis)},
            {"job", e.active_job ? json(*e.active_job) : json(nullptr)}};
  }

  void routes() {
    http_.Get("/pullbacks", guard([this](const httplib::Request&, httplib::Response& res) {
                std::vector<std::shared_ptr<Entry>> all;
                {
                  std::lock_guard lock(mu_);
                  for (auto& [id, e] : entries_) all.push_back(e);
                }
                json out = json::array();
                for (auto& e : all) out.push_back(meta_json(*e));
                send_json(res, out);
              }));

    http_.Get(R"(/pullbacks/([^/]+))", guard([this](const httplib::Request& req, httplib::Response& res) {
                send_json(res, meta_json(*find(req.matches[1])));
              }));

    http_.Post(R"(/pullbacks/([^/]+)/analyze)", guard([this](const httplib::Request& req, httplib::Response& res) {
                 analyze(req, res);
               }));

    http_.Get(R"(/jobs/(\d+))", guard([this](const httplib::Request& req, httplib::Response& res) {
                const int id = std::stoi(req.matches[1]);
                const auto info = queue_.info(id);
                if (!info) throw HttpError(404, "unknown job " + std::string(req.matches[1]));
                json j{{"id", info->id},
                       {"pullback", info->name},
                       {"status", pipeline::status_name(info->status)},
                       {"stage", info->stage},
                       {"progress", info->progress}};
                if (!info->error.empty()) j["error"] = info->error;
                std::lock_guard lock(jobs_mu_);
                if (const auto it = job_timings_.find(id); it != job_timings_.end()) j["timings_s"] = it->second;
                send_json(res, j);
              }));

    http_.Get(R"(/pullbacks/([^/]+)/frames/(\d+))", guard([this](const httplib::Request& req, httplib::Response& res) {
                frame_png(req, res);
              }));

    http_.Get(R"(/pullbacks/([^/]+)/labels/(\d+))", guard([this](const httplib::Request& req, httplib::Response& res) {
                auto e = find(req.matches[1]);
                std::lock_guard lock(e->mu);
                ensure_loaded(*e);
                const int n = frame_index(*e, req.matches[2]);
                const auto& d = e->labels.frames[n].data();
                res.set_header(kRevisionHeader, std::to_string(e->revision));
                res.set_content(std::string(d.begin(), d.end()), "application/octet-stream");
              }));

    http_.Put(R"(/pullbacks/([^/]+)/labels/(\d+))", guard([this](const httplib::Request& req, httplib::Response& res) {
                put_labels(req, res);
              }));

    http_.Get(R"(/pullbacks/([^/]+)/transcript)", guard([this](const httplib::Request& req, httplib::Response& res) {
                auto e = find(req.matches[1]);
                std::lock_guard lock(e->mu);
                json items = json::array();
                for (const auto& t : e->transcript) {
                  json j = t.edit ? raster::to_json(*t.edit) : json{{"frame", t.frame}, {"tool", "replace"}};
                  j["revision"] = t.revision;
                  items.push_back(j);
                }
                send_json(res, {{"revision", e->revision}, {"edits", items}});
              }));

    http_.Get(R"(/pullbacks/([^/]+)/quant\.csv)", guard([this](const httplib::Request& req, httplib::Response& res) {
                const auto [labels, cal, analysis] = snapshot(req.matches[1]);
                res.set_content(io::frame_csv(label_quant(labels, cal, analysis.get())), "text/csv");
              }));

    http_.Get(R"(/pullbacks/([^/]+)/lesions\.csv)", guard([this](const httplib::Request& req, httplib::Response& res) {
                const auto [labels, cal, analysis] = snapshot(req.matches[1]);
                const auto q = label_quant(labels, cal, analysis.get());
                std::vector<bool> gate(q.size());
                for (std::size_t i = 0; i < q.size(); ++i) gate[i] = q[i].gated;
                res.set_content(io::lesion_csv(quant::lesion_quant(q, gate, cal, opt_.config.score)), "text/csv");
              }));

    http_.Get(R"(/pullbacks/([^/]+)/quant/(\d+))", guard([this](const httplib::Request& req, httplib::Response& res) {
                auto e = find(req.matches[1]);
                std::lock_guard lock(e->mu);
                ensure_loaded(*e);
                const int n = frame_index(*e, req.matches[2]);
                LabelVolume one(1, e->meta.n_alines, e->meta.n_r);
                one.frames[0] = e->labels.frames[n];
                auto q = label_quant(one, e->meta.calibration, nullptr)[0];
                q.frame = n;
                const auto& a = e->analysis;
                if (a && n >= a->first_frame && n <= a->last_frame)
                  q.flags.segmentation_failed = a->frames[n - a->first_frame].flags.segmentation_failed;
                send_json(res, io::frame_quant_json(q));
              }));

    http_.Get(R"(/pullbacks/([^/]+)/enface)", guard([this](const httplib::Request& req, httplib::Response& res) {
                const std::string map = req.has_param("map") ? req.get_param_value("map") : "angle";
                if (map != "angle" && map != "thickness" && map != "depth")
                  throw HttpError(400, "map must be angle, thickness or depth");
                const auto [labels, cal, analysis] = snapshot(req.matches[1]);
                std::vector<Contour> contours(labels.n_frames());
                for (int f = 0; f < labels.n_frames(); ++f) contours[f] = quant::contour_from_labels(labels.frames[f]);
                const auto m = quant::enface_maps(labels, contours, cal, opt_.config.enface_bins);
                res.set_content(png::encode_gray(pipeline::enface_image(m, map)), "image/png");
              }));

    http_.Get(R"(/pullbacks/([^/]+)/longitudinal)", guard([this](const httplib::Request& req, httplib::Response& res) {
                longitudinal_png(req, res);
              }));

    http_.Get(R"(/pullbacks/([^/]+)/struts)", guard([this](const httplib::Request& req, httplib::Response& res) {
                auto e = find(req.matches[1]);
                std::shared_ptr<const pipeline::Artifacts> a;
                {
                  std::lock_guard lock(e->mu);
                  a = e->analysis;
                }
                json items = json::array();
                json summary = nullptr;
                if (a) {
                  for (const auto& s : a->struts) items.push_back(strut_json(s, e->meta.n_alines));
                  if (a->stent_report) summary = pipeline::summary_json(*a, opt_.config)["stent"];
                }
                send_json(res, {{"struts", items}, {"summary", summary}});
              }));

    http_.Get(R"(/pullbacks/([^/]+)/annotations/(\d+))", guard([this](const httplib::Request& req, httplib::Response& res) {
                auto e = find(req.matches[1]);
                std::lock_guard lock(e->mu);
                const int n = frame_index(*e, req.matches[2]);
                const auto it = e->annotations.find(n);
                send_json(res, it == e->annotations.end() ? json::array() : it->second);
              }));

    http_.Put(R"(/pullbacks/([^/]+)/annotations/(\d+))", guard([this](const httplib::Request& req, httplib::Response& res) {
                auto e = find(req.matches[1]);
                const json body = json::parse(req.body);
                if (!body.is_array()) throw InvalidArgument("annotations must be a JSON array");
                std::lock_guard lock(e->mu);
                const int n = frame_index(*e, req.matches[2]);
                e->annotations[n] = body;
                send_json(res, {{"frame", n}, {"count", body.size()}});
              }));

    http_.Post("/registration", guard([this](const httplib::Request& req, httplib::Response& res) {
                 register_pair(req, res);
               }));
  }

  struct Snapshot {
    LabelVolume labels;
    Calibration cal;
    std::shared_ptr<const pipeline::Artifacts> analysis;
  };

  Snapshot snapshot(const std::string& id) {
    auto e = find(id);
    std::lock_guard lock(e->mu);
    ensure_loaded(*e);
    return {e->labels, e->meta.calibration, e->analysis};
  }

  void analyze(const httplib::Request& req, httplib::Response& res) {
    auto e = find(req.matches[1]);
    PipelineConfig cfg = opt_.config;
    if (!req.body.empty()) {
      json body = json::parse(req.body);
      if (body.contains("config")) body = body["config"];
      cfg = parse_config(body, cfg);
    }
    std::lock_guard lock(e->mu);
    if (e->active_job) throw HttpError(503, "analysis already running for '" + e->id + "'");
    ensure_loaded(*e);
    pipeline::resolve_roi(cfg, e->meta.n_frames);
    auto data = e->data;
    const auto* models = opt_.models;
    const bool write = opt_.write_outputs && !e->dir.empty();
    const int job = queue_.submit(e->id, [this, e, data, cfg, models, write](const pipeline::ProgressFn& progress) {
      std::shared_ptr<pipeline::Artifacts> a;
      try {
        a = std::make_shared<pipeline::Artifacts>(pipeline::run_pipeline(*data, cfg, {nullptr, models}, progress));
        if (write) pipeline::write_artifacts(e->dir / "analysis", *a, cfg, data->n_alines);
      } catch (...) {
        std::lock_guard lock(e->mu);
        e->active_job.reset();
        throw;
      }
      json timings = json::object();
      for (const auto& t : a->timings) timings[t.stage] = t.seconds;
      std::lock_guard lock(e->mu);
      for (int f = a->first_frame; f <= a->last_frame; ++f)
        e->labels.frames[f] = a->labels.frames[f - a->first_frame];
      e->base = e->labels;
      e->transcript.clear();
      ++e->revision;
      e->analysis = a;
      const int id = *e->active_job;
      e->active_job.reset();
      std::lock_guard jl(jobs_mu_);
      job_timings_[id] = timings;
    });
    e->active_job = job;
    send_json(res, {{"job", job}, {"pullback", e->id}}, 202);
  }

  void put_labels(const httplib::Request& req, httplib::Response& res) {
    auto e = find(req.matches[1]);
    if (!req.has_header(kRevisionHeader)) throw HttpError(428, "X-Revision header required");
    std::uint64_t rev = 0;
    try {
      rev = std::stoull(req.get_header_value(kRevisionHeader));
    } catch (const std::exception&) {
      throw HttpError(400, "X-Revision must be an unsigned integer");
    }
    const std::string type = req.get_header_value("Content-Type");
    const bool raw = type.rfind("application/octet-stream", 0) == 0;
    std::lock_guard lock(e->mu);
    ensure_loaded(*e);
    const int n = frame_index(*e, req.matches[2]);
    if (rev != e->revision) {
      const auto it = e->writes.find(rev);
      if (it != e->writes.end() && it->second.frame == n && it->second.content_type == (raw ? "raw" : "json") &&
          it->second.body == req.body) {
        res.set_header(kRevisionHeader, std::to_string(it->second.to));
        send_json(res, {{"revision", it->second.to}, {"replayed", true}});
        return;
      }
      res.set_header(kRevisionHeader, std::to_string(e->revision));
      send_json(res, {{"error", "stale revision"}, {"revision", e->revision}}, 409);
      return;
    }
    if (e->active_job) throw HttpError(503, "analysis running for '" + e->id + "'");
    TranscriptEntry t;
    t.frame = n;
    LabelFrame next = e->labels.frames[n];
    if (raw) {
      if (req.body.size() != next.size())
        throw InvalidArgument("label frame needs " + std::to_string(next.size()) + " bytes, got " +
                              std::to_string(req.body.size()));
      for (std::size_t i = 0; i < req.body.size(); ++i) {
        const auto v = static_cast<std::uint8_t>(req.body[i]);
        if (v > kMaxLabelCode) throw InvalidArgument("label code out of range at byte " + std::to_string(i));
        next.data()[i] = v;
      }
      t.replacement = next;
    } else {
      const auto edit = raster::parse_edit(json::parse(req.body), n);
      raster::apply(next, edit);
      t.edit = edit;
    }
    e->labels.frames[n] = std::move(next);
    t.revision = ++e->revision;
    e->transcript.push_back(std::move(t));
    e->writes[rev] = {n, raw ? "raw" : "json", req.body, e->revision};
    res.set_header(kRevisionHeader, std::to_string(e->revision));
    send_json(res, {{"revision", e->revision}});
  }

  void frame_png(const httplib::Request& req, httplib::Response& res) {
    auto e = find(req.matches[1]);
    const std::string view = req.has_param("view") ? req.get_param_value("view") : "xy";
    if (view != "xy" && view != "rtheta") throw HttpError(400, "view must be xy or rtheta");
    const bool overlay = req.has_param("overlay") && req.get_param_value("overlay") == "1";
    PolarFrame frame;
    LabelFrame labels;
    {
      std::lock_guard lock(e->mu);
      ensure_loaded(*e);
      const int n = frame_index(*e, req.matches[2]);
      frame = e->data->frames[n];
      labels = e->labels.frames[n];
    }
    Image<std::uint8_t> gray;
    Image<std::uint8_t> lab;
    if (view == "rtheta") {
      gray = png::to_display(frame);
      lab = labels;
    } else {
      int size = req.has_param("size") ? std::stoi(req.get_param_value("size")) : 512;
      if (size < 2 || size > 4096) throw HttpError(400, "size must be in [2, 4096]");
      const auto cart = polar_to_cartesian(frame, size);
      Image<std::uint16_t> c16(size, size);
      for (std::size_t i = 0; i < cart.size(); ++i)
        c16.data()[i] = static_cast<std::uint16_t>(std::clamp(std::lround(cart.data()[i]), 0L, 65535L));
      gray = png::to_display(c16);
      if (overlay) {
        const auto cl = polar_to_cartesian(labels, size, Interpolation::nearest);
        lab = Image<std::uint8_t>(size, size);
        for (std::size_t i = 0; i < cl.size(); ++i) lab.data()[i] = static_cast<std::uint8_t>(cl.data()[i]);
      }
    }
    if (!overlay) {
      res.set_content(png::encode_gray(gray), "image/png");
      return;
    }
    res.set_content(png::encode_rgb(gray.cols(), gray.rows(), png::overlay(gray, lab)), "image/png");
  }

  void longitudinal_png(const httplib::Request& req, httplib::Response& res) {
    auto e = find(req.matches[1]);
    if (!req.has_param("angle")) throw HttpError(400, "angle is required");
    double angle = 0;
    try {
      angle = std::stod(req.get_param_value("angle"));
    } catch (const std::exception&) {
      throw HttpError(400, "angle must be a number");
    }
    const bool overlay = req.has_param("overlay") && req.get_param_value("overlay") == "1";
    std::shared_ptr<const Pullback> data;
    LabelVolume labels;
    {
      std::lock_guard lock(e->mu);
      ensure_loaded(*e);
      data = e->data;
      if (overlay) labels = e->labels;
    }
    const auto v = quant::longitudinal_view(*data, overlay ? &labels : nullptr, angle);
    const auto gray = png::to_display(v.image);
    if (!overlay) {
      res.set_content(png::encode_gray(gray), "image/png");
      return;
    }
    res.set_content(png::encode_rgb(gray.cols(), gray.rows(), png::overlay(gray, v.labels)), "image/png");
  }

  void register_pair(const httplib::Request& req, httplib::Response& res) {
    const json body = json::parse(req.body);
    if (!body.contains("ref") || !body.contains("float") || !body["ref"].is_string() || !body["float"].is_string())
      throw InvalidArgument("ref and float pullback ids are required");
    const std::string mode = body.value("mode", "automatic");
    const auto ref = snapshot(body["ref"].get<std::string>());
    const auto flt = snapshot(body["float"].get<std::string>());
    registration::RegistrationResult r;
    if (mode == "landmark") {
      const auto& lm = body.at("landmarks");
      const auto pair = [&](const char* k) {
        const auto& a = lm.at(k);
        if (!a.is_array() || a.size() != 2) throw InvalidLandmarks(std::string("landmarks.") + k + " needs two frames");
        return std::pair<int, int>{a[0].get<int>(), a[1].get<int>()};
      };
      r = registration::register_landmark(pair("ref"), pair("float"), ref.labels.n_frames(), flt.labels.n_frames());
    } else if (mode == "automatic") {
      registration::AutoOptions o;
      if (body.contains("max_offset")) o.max_offset = body["max_offset"].get<int>();
      if (body.contains("min_overlap")) o.min_overlap = body["min_overlap"].get<int>();
      r = registration::register_auto(registration::thickness_signal(ref.labels, ref.cal, "ref"),
                                      registration::thickness_signal(flt.labels, flt.cal, "float"), o);
    } else {
      throw InvalidArgument("mode must be automatic or landmark");
    }
    send_json(res, registration::to_json(r));
  }

  Options opt_;
  httplib::Server http_;
  std::mutex mu_;
  std::map<std::string, std::shared_ptr<Entry>> entries_;
  std::mutex jobs_mu_;
  std::map<int, json> job_timings_;
  pipeline::JobQueue queue_;  // last member: its worker joins before the rest is destroyed
};

}  // namespace octopus::service
