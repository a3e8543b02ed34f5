// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any FAIL.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <numbers>
#include <random>
#include <string>
#include <thread>

#include "helpers.hpp"
#include "oracles.hpp"
#include "octopus/io.hpp"
#include "octopus/pipeline.hpp"
#include "octopus/registration.hpp"

using namespace octopus;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

struct Outcome {
  bool pass = true;
  std::string detail;
  void check(bool ok, const std::string& what) {
    pass = pass && ok;
    if (!detail.empty()) detail += "; ";
    detail += what + (ok ? "" : " [miss]");
  }
};

int circular_distance(int a, int b, int n) {
  const int d = wrap_index(a - b, n);
  return std::min(d, n - d);
}

// ---------------------------------------------------------------------------

const phantom::Phantom& long_phantom() {
  static const phantom::Phantom ph = [] {
    phantom::CorpusOptions o;
    o.n_frames = 375;
    o.noise = 0;
    o.max_lesions = 3;
    return phantom::generate(phantom::random_spec(375, o), 375);
  }();
  return ph;
}

Outcome guidewire() {
  Outcome out;
  int ok = 0, total = 0;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    phantom::CorpusOptions o;
    o.n_frames = 30;
    const auto ph = phantom::generate(phantom::random_spec(seed, o), seed);
    const auto band = preprocess::detect_guidewire(preprocess::accumulate_intensity(ph.pullback));
    for (int f = 0; f < ph.pullback.n_frames(); ++f) {
      const auto& t = ph.truth.guidewire[f];
      const auto& b = band.frames[f];
      ++total;
      if (t && b && circular_distance(t->lower, b->lower, o.n_alines) <= 2 &&
          circular_distance(t->upper, b->upper, o.n_alines) <= 2)
        ++ok;
    }
  }
  const double rate = static_cast<double>(ok) / total;
  out.check(rate >= 0.98, fmt("edges within 2 A-lines on %.2f%% of %d frames", 100 * rate, total));

  int flagged = 0;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    phantom::CorpusOptions o;
    o.n_frames = 20;
    o.guidewire = false;
    const auto ph = phantom::generate(phantom::random_spec(seed, o), seed);
    try {
      preprocess::detect_guidewire(preprocess::accumulate_intensity(ph.pullback));
    } catch (const NoShadowFound&) {
      ++flagged;
    }
  }
  out.check(flagged == 20, fmt("NoShadowFound on %d/20 guidewire-free phantoms", flagged));

  const auto map = preprocess::accumulate_intensity(long_phantom().pullback);
  double best = 1e9;
  for (int k = 0; k < 3; ++k) {
    const auto t0 = Clock::now();
    preprocess::detect_guidewire(map);
    best = std::min(best, seconds_since(t0));
  }
  out.check(best < 0.05, fmt("band tracking %.1f ms at 375 frames", best * 1000));
  return out;
}

Outcome lumen() {
  Outcome out;
  struct Case {
    const char* name;
    phantom::PhantomSpec spec;
  };
  std::vector<Case> cases;
  phantom::PhantomSpec base;
  base.n_frames = 12;
  base.noise = 1;
  base.guidewire = phantom::GuidewireSpec{};
  auto circ = base;
  circ.lumen = {1.5, 1.5, 0, 0, 0};
  auto ell = base;
  ell.lumen = {1.8, 1.1, 35, 0.1, -0.1};
  auto drift = base;
  drift.lumen = {1.3, 1.2, 0, -0.2, 0.1};
  drift.lumen_end = phantom::LumenShape{1.7, 1.4, 60, 0.2, -0.15};
  cases = {{"circular", circ}, {"elliptical", ell}, {"drifting", drift}};
  for (const auto& c : cases) {
    const auto ph = phantom::generate(c.spec, 17);
    const auto band = preprocess::detect_guidewire(preprocess::accumulate_intensity(ph.pullback));
    const auto res = preprocess::segment_lumen_dp(ph.pullback, band);
    double worst = 0;
    bool failed = false;
    for (int f = 0; f < c.spec.n_frames; ++f) {
      if (res[f].failed) {
        failed = true;
        continue;
      }
      const auto gw = band.mask(f, c.spec.n_alines);
      double se = 0;
      int m = 0;
      for (int a = 0; a < c.spec.n_alines; ++a) {
        if (gw[a]) continue;
        const double e = res[f].contour[a] - ph.truth.lumen[f][a];
        se += e * e;
        ++m;
      }
      worst = std::max(worst, std::sqrt(se / m));
    }
    out.check(!failed && worst <= 2.0, fmt("%s worst-frame RMS %.2f px", c.name, worst));
  }

  std::mt19937_64 rng(64);
  std::uniform_real_distribution<float> u(-1, 1);
  int agree = 0;
  const int n_micro = 30;
  for (int t = 0; t < n_micro; ++t) {
    Image<float> s(64, 64);
    for (auto& v : s.data()) v = u(rng);
    const int jump = 1 + t % 4;
    const auto p = preprocess::solve_periodic_path(s, jump);
    if (std::abs(p.score - oracle::periodic_all_starts(s, jump)) < 1e-3) ++agree;
  }
  out.check(agree == n_micro, fmt("64x64 optimum matches per-start search on %d/%d", agree, n_micro));
  int exact = 0;
  const int n_tiny = 200;
  for (int t = 0; t < n_tiny; ++t) {
    const int n = 3 + t % 5, R = 3 + t % 4, jump = 1 + t % 2;
    Image<float> s(n, R);
    for (auto& v : s.data()) v = u(rng);
    if (std::abs(preprocess::solve_periodic_path(s, jump).score - oracle::periodic_exhaustive(s, jump)) < 1e-5) ++exact;
  }
  out.check(exact == n_tiny, fmt("exhaustive enumeration agrees on %d/%d", exact, n_tiny));
  return out;
}

Outcome calcium() {
  Outcome out;
  long tp = 0, fp = 0, fn = 0;
  int truth_frames = 0, missed = 0, clear_frames = 0, false_frames = 0;
  for (std::uint64_t seed = 201; seed <= 220; ++seed) {
    phantom::CorpusOptions o;
    const auto ph = phantom::generate(phantom::random_spec(seed, o), seed);
    const auto a = pipeline::run_pipeline(ph.pullback, PipelineConfig{});
    for (int f = 0; f < ph.pullback.n_frames(); ++f) {
      const auto& t = ph.truth.labels.frames[f].data();
      const auto& l = a.labels.frames[f].data();
      for (std::size_t i = 0; i < t.size(); ++i) {
        if (t[i] == code(Label::guidewire)) continue;
        const bool tc = t[i] == code(Label::calcium), pc = l[i] == code(Label::calcium);
        tp += tc && pc;
        fp += !tc && pc;
        fn += tc && !pc;
      }
      if (ph.truth.calcium_frames[f]) {
        ++truth_frames;
        missed += !a.gate.gated[f];
      } else {
        ++clear_frames;
        false_frames += a.gate.gated[f];
      }
    }
  }
  const double sens = static_cast<double>(tp) / (tp + fn);
  const double prec = static_cast<double>(tp) / (tp + fp);
  const double f1 = 2 * sens * prec / (sens + prec);
  out.check(sens >= 0.85, fmt("pixel sensitivity %.3f", sens));
  out.check(f1 >= 0.78, fmt("F1 %.3f", f1));
  const double miss_rate = static_cast<double>(missed) / truth_frames;
  const double false_rate = static_cast<double>(false_frames) / clear_frames;
  out.check(miss_rate <= 0.067, fmt("missed frames %.1f%% of %d", 100 * miss_rate, truth_frames));
  out.check(false_rate <= 0.045, fmt("false frames %.1f%% of %d", 100 * false_rate, clear_frames));
  return out;
}

Outcome stent_metrics() {
  Outcome out;
  const auto& models = training::default_models();
  int tp = 0, fp = 0, fn = 0, ctp = 0, cfn = 0, ctn = 0, cfp = 0, ncov = 0, nmal = 0;
  double cov_err = 0, mal_worst = 0;
  for (std::uint64_t seed : {9001, 9002, 9003, 9004}) {
    training::CorpusSpec cs;
    auto o = cs.options;
    o.n_frames = 20;
    const auto ph = phantom::generate(phantom::random_spec(seed, o), seed);
    const auto pre = training::preprocess_pullback(ph.pullback);
    const auto recs =
        stent::analyze_pullback(ph.pullback, pre.lumen, pre.band, models, 0, ph.pullback.n_frames() - 1);
    const auto m = training::match_struts(recs, ph.truth.struts, ph.pullback.n_alines);
    std::vector<bool> found(ph.truth.struts.size(), false);
    for (std::size_t i = 0; i < recs.size(); ++i) {
      if (m[i] < 0) {
        ++fp;
        continue;
      }
      const auto& t = ph.truth.struts[m[i]];
      found[m[i]] = true;
      if (t.occluded) continue;
      ++tp;
      if (t.covered) (recs[i].covered ? ctp : cfn)++;
      else (recs[i].covered ? cfp : ctn)++;
      if (t.covered && recs[i].covered) {
        cov_err += recs[i].coverage_um - t.coverage_um;
        ++ncov;
      }
      if (t.malapposition_um > 0) {
        ++nmal;
        mal_worst = std::max(mal_worst, std::abs(recs[i].malapposition_um - t.malapposition_um));
      }
    }
    for (std::size_t j = 0; j < found.size(); ++j)
      if (!found[j] && !ph.truth.struts[j].occluded) ++fn;
  }
  const int visible = tp + fn;
  out.check(visible >= 500, fmt("%d held-out struts", visible));
  out.check(static_cast<double>(tp) / visible >= 0.90, fmt("detector sensitivity %.3f", double(tp) / visible));
  out.check(static_cast<double>(tp) / (tp + fp) >= 0.90, fmt("precision %.3f", double(tp) / (tp + fp)));
  out.check(double(ctp) / (ctp + cfn) >= 0.94, fmt("coverage sensitivity %.3f", double(ctp) / (ctp + cfn)));
  out.check(double(ctn) / (ctn + cfp) >= 0.90, fmt("specificity %.3f", double(ctn) / (ctn + cfp)));
  out.check(ncov > 0 && std::abs(cov_err / ncov) <= 5, fmt("coverage mean error %+.2f um (n %d)", cov_err / ncov, ncov));
  out.check(nmal > 0 && mal_worst <= 10, fmt("malapposition worst error %.2f um (n %d)", mal_worst, nmal));
  return out;
}

// Registration ----------------------------------------------------------------

phantom::PhantomSpec lesion_track(std::uint64_t seed, int frames, double noise) {
  std::mt19937_64 rng(seed);
  auto U = [&](double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); };
  phantom::PhantomSpec s;
  s.id = "track";
  s.n_frames = frames;
  s.n_alines = 128;
  s.n_r = 700;
  s.noise = noise;
  s.lumen = {1.4, 1.3, 20, 0, 0};
  s.guidewire = phantom::GuidewireSpec{};
  for (int f = 5; f + 12 < frames;) {
    const int len = static_cast<int>(U(4, 12));
    s.calcium.push_back({f, f + len - 1, U(0, 360), U(60, 160), U(0.05, 0.2), U(0.25, 0.8)});
    f += len + static_cast<int>(U(3, 14));
  }
  return s;
}

Pullback window(const Pullback& pb, int first, int count) {
  PipelineConfig c;
  c.roi = Roi{first, first + count - 1};
  return pipeline::detail::slice(pb, *c.roi);
}

registration::ThicknessSignal signal_of(const Pullback& pb) {
  return registration::thickness_signal(pipeline::run_pipeline(pb, PipelineConfig{}).labels, pb.calibration);
}

bool unique_peak(const registration::ThicknessSignal& r, const registration::ThicknessSignal& f, int best) {
  const int max_off = std::min(r.mm.size(), f.mm.size()) / 2;
  const auto top = oracle::correlation(r.mm, f.mm, best, 25);
  for (int o = -max_off; o <= max_off; ++o) {
    if (o == best) continue;
    const auto c = oracle::correlation(r.mm, f.mm, o, 25);
    if (c && top && *c >= *top - 1e-9) return false;
  }
  return true;
}

Outcome registration_metrics() {
  Outcome out;
  int anti_ok = 0, anti_total = 0;
  auto antisymmetry = [&](const registration::ThicknessSignal& r, const registration::ThicknessSignal& f, int off) {
    if (!unique_peak(r, f, off)) return;
    ++anti_total;
    anti_ok += registration::register_auto(f, r).offset == -off;
  };

  const auto clean = phantom::generate(lesion_track(1, 540, 0), 1);
  const int len = 320, base = 110;
  const auto ref_sig = signal_of(window(clean.pullback, base, len));
  int exact = 0;
  const std::vector<int> shifts{-100, -73, -50, -17, -1, 0, 1, 17, 50, 73, 100};
  for (int k : shifts) {
    const auto flt_sig = signal_of(window(clean.pullback, base + k, len));
    const auto r = registration::register_auto(ref_sig, flt_sig);
    exact += r.offset == k;
    antisymmetry(ref_sig, flt_sig, r.offset);
  }
  out.check(exact == static_cast<int>(shifts.size()),
            fmt("noise 0: exact on %d/%zu shifts up to +-100", exact, shifts.size()));

  int within = 0;
  const int trials = 50;
  std::mt19937_64 rng(50);
  for (int t = 0; t < trials; ++t) {
    const int k = std::uniform_int_distribution<int>(-15, 15)(rng);
    const auto spec = lesion_track(1000 + t, 100, 1);
    const auto a = phantom::generate(spec, 2000 + t), b = phantom::generate(spec, 3000 + t);
    const auto rs = signal_of(window(a.pullback, 20, 60));
    const auto fs = signal_of(window(b.pullback, 20 + k, 60));
    const auto r = registration::register_auto(rs, fs);
    within += std::abs(r.offset - k) <= 1;
    antisymmetry(rs, fs, r.offset);
  }
  out.check(within == trials, fmt("noise 1: within 1 frame on %d/%d trials", within, trials));
  out.check(anti_ok == anti_total, fmt("antisymmetry on %d/%d unique-peak trials", anti_ok, anti_total));
  return out;
}

// Quantification -----------------------------------------------------------

Outcome quantification() {
  Outcome out;
  int frames = 0, frame_ok = 0, lesion_sets = 0, lesion_ok = 0;
  for (std::uint64_t seed = 1; seed <= 100; ++seed) {
    phantom::CorpusOptions o;
    o.n_frames = 6 + seed % 5;
    o.n_alines = seed % 2 ? 128 : 256;
    o.n_r = 700;
    o.noise = 0;
    o.max_lesions = 2;
    const auto ph = phantom::generate(phantom::random_spec(seed, o), seed);
    const auto& cal = ph.pullback.calibration;
    const double px = cal.r_pixel_mm();
    const double arc = 360.0 / o.n_alines;
    std::vector<quant::FrameQuant> q;
    std::vector<oracle::FrameQuant> oq;
    for (int f = 0; f < o.n_frames; ++f) {
      const auto& lab = ph.truth.labels.frames[f];
      q.push_back(quant::frame_quant(f, lab, cal));
      oq.push_back(oracle::frame_quant(lab, cal));
      const auto& a = q.back();
      const auto& b = oq.back();
      bool ok = std::abs(a.lumen_area_mm2 - b.area_mm2) <= 1e-9 && std::abs(a.lumen_diam_max_mm - b.diam_max_mm) <= 2 * px &&
                std::abs(a.lumen_diam_min_mm - b.diam_min_mm) <= 2 * px &&
                std::abs(a.lumen_diam_mean_mm - b.diam_mean_mm) <= px &&
                std::abs(a.calc_angle_deg - b.angle_deg) <= arc + 1e-9 &&
                a.calc_max_thickness_mm.has_value() == b.max_thick_mm.has_value();
      if (ok && b.max_thick_mm)
        ok = std::abs(*a.calc_max_thickness_mm - *b.max_thick_mm) <= px + 1e-9 &&
             std::abs(*a.calc_min_depth_mm - *b.min_depth_mm) <= px + 1e-9;
      ++frames;
      frame_ok += ok;
    }
    const auto& gate = ph.truth.calcium_frames;
    const auto l = quant::lesion_quant(q, gate, cal);
    const auto ol = oracle::lesions(oq, gate, cal);
    bool ok = l.size() == ol.size();
    for (std::size_t i = 0; ok && i < l.size(); ++i)
      ok = l[i].first_frame == ol[i].first && l[i].last_frame == ol[i].last &&
           std::abs(l[i].length_mm - ol[i].length_mm) < 1e-9 && std::abs(l[i].max_angle_deg - ol[i].max_angle) <= arc + 1e-9 &&
           std::abs(l[i].max_thickness_mm - ol[i].max_thick) <= px + 1e-9 &&
           l[i].min_depth_mm.has_value() == ol[i].min_depth.has_value() && l[i].calcium_score == ol[i].score;
    ++lesion_sets;
    lesion_ok += ok;
  }
  out.check(frame_ok == frames, fmt("frame fields match oracle on %d/%d frames", frame_ok, frames));
  out.check(lesion_ok == lesion_sets, fmt("lesion fields match on %d/%d phantoms", lesion_ok, lesion_sets));

  double worst = 0;
  for (const auto& shape : {phantom::LumenShape{1.5, 1.5, 0, 0, 0}, phantom::LumenShape{1.8, 1.2, 30, 0, 0},
                            phantom::LumenShape{1.6, 1.0, 75, 0.2, -0.1}}) {
    phantom::PhantomSpec s;
    s.n_frames = 1;
    s.lumen = shape;
    const auto ph = phantom::generate(s, 1);
    const double want = std::numbers::pi * shape.a_mm * shape.b_mm;
    const double got = quant::frame_quant(0, ph.truth.labels.frames[0], ph.pullback.calibration).lumen_area_mm2;
    worst = std::max(worst, std::abs(got - want) / want);
  }
  out.check(worst <= 0.005, fmt("analytic area worst error %.3f%%", 100 * worst));
  return out;
}

Outcome throughput() {
  Outcome out;
  const auto dir = testing_helpers::temp_dir("throughput");
  const auto t0 = Clock::now();
  const PipelineConfig cfg;
  const auto a = pipeline::run_pipeline(long_phantom().pullback, cfg);
  pipeline::write_artifacts(dir, a, cfg, long_phantom().pullback.n_alines);
  const double total = seconds_since(t0);
  const double per = total / a.n_frames();
  out.check(per <= 0.6, fmt("%.3f s/frame over %d frames on %u core(s)", per, a.n_frames(),
                            std::max(1u, std::thread::hardware_concurrency())));
  out.check(total <= 240, fmt("%.1f s end to end", total));
  std::filesystem::remove_all(dir);
  return out;
}

Outcome determinism() {
  Outcome out;
  phantom::CorpusOptions o;
  o.n_frames = 24;
  o.stent = true;
  const auto ph = phantom::generate(phantom::random_spec(4242, o), 4242);
  PipelineConfig cfg;
  cfg.mode = Mode::stent_analysis;
  const auto d1 = testing_helpers::temp_dir("determinism1"), d2 = testing_helpers::temp_dir("determinism2");
  pipeline::write_artifacts(d1, pipeline::run_pipeline(ph.pullback, cfg), cfg, o.n_alines);
  pipeline::write_artifacts(d2, pipeline::run_pipeline(ph.pullback, cfg), cfg, o.n_alines);
  int same = 0;
  const std::vector<std::string> files{"labels.raw", "quant.csv", "lesions.csv", "stent.csv"};
  for (const auto& f : files) same += io::detail::read_file(d1 / f) == io::detail::read_file(d2 / f);
  out.check(same == static_cast<int>(files.size()), fmt("%d/%zu artifacts byte-identical", same, files.size()));
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
      {"guidewire band tracking", guidewire},
      {"lumen boundary", lumen},
      {"calcium segmentation and gate", calcium},
      {"stent struts, coverage, malapposition", stent_metrics},
      {"pullback registration", registration_metrics},
      {"quantification oracle", quantification},
      {"throughput", throughput},
      {"determinism", determinism},
  };
  int failed = 0;
  for (const auto& [name, fn] : criteria) {
    if (argc > 1 && std::string(name).find(argv[1]) == std::string::npos) continue;
    const auto t0 = Clock::now();
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail = std::string("exception: ") + e.what();
    }
    failed += !o.pass;
    std::printf("%s %s: %s (%.1f s)\n", o.pass ? "PASS" : "FAIL", name, o.detail.c_str(), seconds_since(t0));
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
