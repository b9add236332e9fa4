#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "hazelevel/hazelevel.hpp"

namespace fs = std::filesystem;
using namespace hazelevel;

namespace {

constexpr const char* kDefaultVariant = "raw|unit|loglog1p|d_over_t|median|dnorm=0";

struct Globals {
  double d_max = 300.0;
  DarkChannelParams dark_channel;
  GuidedFilterParams guided_filter;
  int jobs = 1;

  void validate() const {
    if (!(d_max > 0.0) || !std::isfinite(d_max)) throw Error("--d-max must be positive and finite");
    dark_channel.validate();
    guided_filter.validate();
    if (jobs < 1) throw Error("--jobs must be >= 1");
  }

  GridOptions grid() const { return {dark_channel, guided_filter, d_max, jobs}; }
};

// Runs one pipeline stage; user-facing errors are prefixed with its name.
template <typename F>
auto stage(const std::string& name, F&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const Error& e) {
    throw Error(name + ": " + e.what());
  }
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= s.size()) {
    const auto comma = s.find(',', start);
    const auto item = s.substr(start, comma == std::string::npos ? std::string::npos : comma - start);
    if (!item.empty()) out.push_back(item);
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

// Depth flags shared by estimate and join.
struct DepthFlags {
  std::string file;
  std::optional<double> uniform;

  DepthSource source() const {
    if (!file.empty()) return DepthSource::precomputed_file(file);
    return DepthSource::uniform_depth(uniform.value_or(1.0));
  }
};

// ---------------------------------------------------------------------------

struct EstimateArgs {
  std::string image;
  DepthFlags depth;
  std::string variant = kDefaultVariant;
  std::string calibration;
};

void run_estimate(const Globals& g, const EstimateArgs& a) {
  const auto variant = stage("variant", [&] { return parse_variant(a.variant); });
  const auto cal = a.calibration.empty()
                       ? std::optional<CalibrationThresholds>{}
                       : stage("loading calibration", [&] { return std::optional{load_calibration(a.calibration)}; });
  const auto image = stage("loading image", [&] { return load_image(a.image); });
  const auto depth = stage("loading depth", [&] {
    return depth_for(a.depth.source(), Shape{image.width(), image.height()}, g.d_max);
  });
  const auto score = stage("estimating", [&] { return estimate(image, depth, variant, g.dark_channel, g.guided_filter); });
  std::string line = "score=" + detail::format_double(score.value) + " variant=" + to_string(score.variant);
  if (cal) line += " level=" + std::string(to_string(cal->classify(score.value)));
  std::cout << line << '\n';
}

// ---------------------------------------------------------------------------

struct SynthArgs {
  std::string scene;
  std::string depth;
  std::string scene_id;
  int procedural = 0;
  int width = 192;
  int height = 144;
  std::uint64_t seed = 1;
  int k_levels = 9;
  std::vector<double> k_values;
  std::string conditions = "uniform,hetero-k,cloudy-sky,cloudy-hetero";
  double noise_strength = 0.3;
  std::vector<double> sky = {0.92, 0.93, 0.95};
  std::string out;
};

struct SceneInput {
  std::string id;
  RasterImage image;
  DepthMap depth;
  std::uint64_t seed;
};

void run_synth(const Globals& g, const SynthArgs& a) {
  if (a.procedural > 0 && !a.scene.empty()) throw Error("use either --scene or --procedural, not both");
  if (a.procedural <= 0 && a.scene.empty()) throw Error("synth needs --scene with --depth, or --procedural N");
  if (a.sky.size() != 3) throw Error("--sky takes three values");

  std::vector<SceneInput> scenes;
  if (!a.scene.empty()) {
    if (a.depth.empty()) throw Error("--scene requires --depth");
    auto image = stage("loading scene", [&] { return load_image(a.scene); });
    auto depth = stage("loading depth", [&] { return load_depth(a.depth, g.d_max, Shape{image.width(), image.height()}); });
    const std::string id = a.scene_id.empty() ? fs::path(a.scene).stem().string() : a.scene_id;
    scenes.push_back({id, std::move(image), std::move(depth), a.seed});
  } else {
    for (int i = 0; i < a.procedural; ++i) {
      const std::uint64_t seed = a.seed + static_cast<std::uint64_t>(i);
      auto scene = stage("procedural scene", [&] { return make_procedural_scene(a.width, a.height, seed, g.d_max); });
      char id[32];
      std::snprintf(id, sizeof id, "scene%03d", i + 1);
      scenes.push_back({id, std::move(scene.image), std::move(scene.depth), seed});
    }
  }

  SynthSettings settings;
  settings.noise_strength = a.noise_strength;
  settings.sky_luminance = {a.sky[0], a.sky[1], a.sky[2]};
  settings.conditions.clear();
  for (const auto& c : split_list(a.conditions)) settings.conditions.push_back(stage("conditions", [&] { return parse_condition(c); }));
  if (!a.k_values.empty()) {
    settings.k_levels = a.k_values;
  } else {
    // One k grid for every scene, from the pooled depths.
    std::vector<double> pooled;
    for (const auto& s : scenes) pooled.insert(pooled.end(), s.depth.map().values().begin(), s.depth.map().values().end());
    const int count = static_cast<int>(pooled.size());
    const DepthMap all(count, 1, std::move(pooled), g.d_max);
    settings.k_levels = stage("k levels", [&] { return default_k_levels(all, a.k_levels); });
  }
  stage("haze settings", [&] {
    settings.validate();
    HazeCondition probe;
    probe.sky_luminance = settings.sky_luminance;
    probe.noise_strength = settings.noise_strength;
    probe.validate();
  });

  const fs::path out = a.out;
  std::vector<StackFiles> stacks(scenes.size());
  stage("writing stack", [&] {
    parallel_for(scenes.size(), g.jobs, [&](std::size_t i) {
      SynthSettings local = settings;
      local.seed = scenes[i].seed;
      stacks[i] = generate_stack(scenes[i].image, scenes[i].depth, scenes[i].id, local, out);
    });
  });

  std::vector<ManifestRow> rows;
  std::vector<LabeledSample> samples;
  for (const auto& stack : stacks) {
    for (const auto& r : stack.rows) {
      rows.push_back(r);
      samples.push_back({r.path, DepthSource::ground_truth_file(stack.depth_path), {Truth::Kind::k_true, r.k_true}, {}});
    }
  }
  stage("writing manifest", [&] {
    write_manifest(out / "manifest.csv", rows);
    write_samples(out / "samples.csv", samples);
  });
  std::cout << (out / "manifest.csv").string() << '\n';
}

// ---------------------------------------------------------------------------

struct GridArgs {
  std::string samples;
  std::string out;
  std::string families;
};

void run_gridsearch(const Globals& g, const GridArgs& a) {
  const auto samples = stage("loading samples", [&] { return read_samples(a.samples); });
  if (samples.empty()) throw Error("loading samples: '" + a.samples + "' lists no samples");

  std::vector<Family> wanted;
  for (const auto& f : split_list(a.families)) {
    if (f == "trans") wanted.push_back(Family::trans);
    else if (f == "depth") wanted.push_back(Family::depth);
    else if (f == "both") wanted.push_back(Family::both);
    else if (f == "baselines") wanted.push_back(Family::baseline);
    else throw Error("--families: unknown family '" + f + "' (use trans, depth, both, baselines)");
  }
  const bool want_baselines = wanted.empty() || std::count(wanted.begin(), wanted.end(), Family::baseline);
  const auto variants = enumerate_variants();
  const auto candidates =
      make_candidates(variants, want_baselines ? std::vector<BaselineKind>(kBaselines.begin(), kBaselines.end())
                                               : std::vector<BaselineKind>{});
  std::cerr << "scoring " << samples.size() << " samples with " << variants.size() << " estimator variants"
            << (want_baselines ? " + 3 baselines" : "") << '\n';

  auto results = stage("grid search", [&] { return grid_search(samples, candidates, g.grid()); });
  if (!wanted.empty()) {
    std::vector<EvalResult> best;
    for (const auto& r : best_per_family(results))
      if (std::count(wanted.begin(), wanted.end(), r.family)) best.push_back(r);
    results = std::move(best);
  }
  if (!a.out.empty()) stage("writing results", [&] { write_results(a.out, results); });

  std::cout << "variants=" << variants.size() << " samples=" << samples.size() << '\n';
  for (const auto& r : results) {
    if (wanted.empty() && &r != &results.front()) break;
    std::cout << to_string(r.family) << ' ' << r.id << " spearman_abs=" << detail::format_double(r.spearman_abs)
              << " rho=" << detail::format_double(r.rho) << " p_value=" << detail::format_double(r.p_value) << '\n';
  }
}

// ---------------------------------------------------------------------------

struct EvalArgs {
  std::string samples;
  std::string variant;
  std::string baseline;
  std::string scores_out;
  std::string calibration_out;
};

void run_eval(const Globals& g, const EvalArgs& a) {
  if (!a.variant.empty() && !a.baseline.empty()) throw Error("use either --variant or --baseline, not both");
  const Candidate candidate = stage("candidate", [&] {
    if (!a.baseline.empty()) return Candidate::of(parse_baseline(a.baseline));
    return Candidate::of(parse_variant(a.variant.empty() ? kDefaultVariant : a.variant));
  });
  const auto samples = stage("loading samples", [&] { return read_samples(a.samples); });
  if (samples.empty()) throw Error("loading samples: '" + a.samples + "' lists no samples");
  for (const auto& s : samples) stage("loading samples", [&] { s.truth.validate(); });

  const std::vector<Candidate> candidates{candidate};
  const auto scores = stage("scoring", [&] {
    return score_matrix(samples.size(), file_loader(samples, g.d_max), candidates, g.grid()).front();
  });
  const auto proxy = proxy_values(samples);
  const auto result = stage("evaluation", [&] { return evaluate_scores(candidates, {scores}, proxy).front(); });

  if (!a.scores_out.empty()) {
    std::vector<csv::Row> rows;
    for (std::size_t i = 0; i < samples.size(); ++i)
      rows.push_back({samples[i].image_path.generic_string(), detail::format_double(scores[i]),
                      std::string(to_string(samples[i].truth.kind)), detail::format_double(proxy[i])});
    stage("writing scores", [&] { csv::write(a.scores_out, {"path", "score", "truth_kind", "truth_value"}, rows); });
  }
  if (!a.calibration_out.empty()) {
    stage("calibration", [&] {
      std::vector<int> labels;
      for (const auto& s : samples) {
        if (s.truth.kind != Truth::Kind::ordinal) throw Error("calibration needs ordinal (0/1/2) ground truth");
        labels.push_back(static_cast<int>(s.truth.value));
      }
      save_calibration(calibrate(scores, labels), a.calibration_out);
    });
  }
  std::cout << "variant=" << result.id << " spearman_abs=" << detail::format_double(result.spearman_abs)
            << " rho=" << detail::format_double(result.rho) << " p_value=" << detail::format_double(result.p_value)
            << " n=" << result.n << '\n';
}

// ---------------------------------------------------------------------------

struct JoinArgs {
  std::string manifest;
  std::string pm25;
  double tolerance = 30.0;
  DepthFlags depth;
  std::string depth_dir;
  std::string out;
};

void run_join(const Globals&, const JoinArgs& a) {
  const auto pm = stage("loading PM2.5 records", [&] { return load_pm25(a.pm25); });
  JoinOptions options;
  options.tolerance_minutes = a.tolerance;
  options.depth = a.depth.source();
  options.depth_dir = a.depth_dir;
  const auto joined = stage("joining", [&] { return join_photos(fs::path(a.manifest), pm.records, options); });
  stage("writing samples", [&] { write_samples(a.out, joined.samples); });
  std::cout << "joined=" << joined.samples.size() << " excluded=" << joined.excluded << " invalid=" << joined.invalid
            << " dropped_records=" << pm.dropped << '\n';
}

void add_depth_flags(CLI::App* cmd, DepthFlags& d) {
  auto* file = cmd->add_option("--depth", d.file, "Depth raster (PFM or DEPTH text) for the image");
  auto* uniform = cmd->add_option("--depth-uniform", d.uniform, "Constant depth for every pixel (default 1)");
  file->excludes(uniform);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Single-image haze level estimation from transmission and depth"};
  app.require_subcommand(1);
  app.set_config("--config", "", "INI/TOML file with option defaults; command-line flags take precedence");

  Globals g;
  app.add_option("--d-max", g.d_max, "Depth cap")->capture_default_str();
  app.add_option("--patch-size", g.dark_channel.patch_size, "Dark channel window (odd)")->capture_default_str();
  app.add_option("--omega", g.dark_channel.omega, "Haze retention factor in (0,1]")->capture_default_str();
  app.add_option("--gf-radius", g.guided_filter.radius, "Guided filter radius")->capture_default_str();
  app.add_option("--gf-eps", g.guided_filter.epsilon, "Guided filter regularizer")->capture_default_str();
  app.add_option("--jobs", g.jobs, "Worker threads")->capture_default_str();

  EstimateArgs est;
  auto* estimate_cmd = app.add_subcommand("estimate", "Score one photo")->fallthrough();
  estimate_cmd->add_option("--image", est.image, "Photo (PNG, PPM or PGM)")->required();
  add_depth_flags(estimate_cmd, est.depth);
  estimate_cmd->add_option("--variant", est.variant, "Estimator variant")->capture_default_str();
  estimate_cmd->add_option("--calibration", est.calibration, "Calibration JSON; adds a Clear/Light/Heavy level");

  SynthArgs syn;
  auto* synth_cmd = app.add_subcommand("synth", "Render graded haze stacks")->fallthrough();
  synth_cmd->add_option("--scene", syn.scene, "Clear scene image");
  synth_cmd->add_option("--depth", syn.depth, "Depth raster for --scene");
  synth_cmd->add_option("--scene-id", syn.scene_id, "Scene id (default: image stem)");
  synth_cmd->add_option("--procedural", syn.procedural, "Generate N procedural scenes instead of --scene");
  synth_cmd->add_option("--width", syn.width, "Procedural scene width")->capture_default_str();
  synth_cmd->add_option("--height", syn.height, "Procedural scene height")->capture_default_str();
  synth_cmd->add_option("--seed", syn.seed, "Noise (and procedural scene) seed")->capture_default_str();
  synth_cmd->add_option("--k-levels", syn.k_levels, "Number of evenly spaced k levels")->capture_default_str();
  synth_cmd->add_option("--k-values", syn.k_values, "Explicit increasing k values")->delimiter(',');
  synth_cmd->add_option("--conditions", syn.conditions, "Comma list of haze conditions")->capture_default_str();
  synth_cmd->add_option("--noise-strength", syn.noise_strength, "Noise amplitude")->capture_default_str();
  synth_cmd->add_option("--sky", syn.sky, "Sky luminance r,g,b")->delimiter(',')->expected(3);
  synth_cmd->add_option("--out", syn.out, "Output directory")->required();

  GridArgs grid;
  auto* grid_cmd = app.add_subcommand("gridsearch", "Rank every variant by |Spearman| against ground truth")->fallthrough();
  grid_cmd->add_option("--samples", grid.samples, "Samples CSV")->required();
  grid_cmd->add_option("--out", grid.out, "Results CSV");
  grid_cmd->add_option("--families", grid.families, "Report the best row of each family: trans,depth,both,baselines");

  EvalArgs ev;
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate one variant or baseline")->fallthrough();
  eval_cmd->add_option("--samples", ev.samples, "Samples CSV")->required();
  eval_cmd->add_option("--variant", ev.variant, std::string("Estimator variant (default ") + kDefaultVariant + ")");
  eval_cmd->add_option("--baseline", ev.baseline, "mean_dark_channel, contrast_rms or saturation_mean");
  eval_cmd->add_option("--scores-out", ev.scores_out, "Per-sample scores CSV");
  eval_cmd->add_option("--calibration-out", ev.calibration_out, "Fit Clear/Light/Heavy cuts (ordinal truth) and save JSON");

  JoinArgs jn;
  auto* join_cmd = app.add_subcommand("join", "Attach hourly PM2.5 records to timestamped photos")->fallthrough();
  join_cmd->add_option("--manifest", jn.manifest, "Photo manifest CSV (path,timestamp)")->required();
  join_cmd->add_option("--pm25", jn.pm25, "PM2.5 CSV (timestamp,pm25)")->required();
  join_cmd->add_option("--tolerance", jn.tolerance, "Maximum gap in minutes")->capture_default_str();
  add_depth_flags(join_cmd, jn.depth);
  join_cmd->add_option("--depth-dir", jn.depth_dir, "Directory of <stem>.pfm depth rasters");
  join_cmd->add_option("--out", jn.out, "Samples CSV")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    stage("options", [&] { g.validate(); });
    if (*estimate_cmd) run_estimate(g, est);
    else if (*synth_cmd) run_synth(g, syn);
    else if (*grid_cmd) run_gridsearch(g, grid);
    else if (*eval_cmd) run_eval(g, ev);
    else if (*join_cmd) run_join(g, jn);
    return 0;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << '\n';
    return 2;
  }
}
