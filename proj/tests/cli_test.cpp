#include <gtest/gtest.h>
#include <sys/wait.h>

#include <array>
#include <cstdio>
#include <string>

#include "hazelevel/hazelevel.hpp"
#include "temp_dir.hpp"

using namespace hazelevel;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code;
  std::string out;
};

Run run(const std::string& args) {
  const std::string cmd = std::string(HAZELEVEL_CLI_PATH) + " " + args + " 2>/dev/null";
  FILE* pipe = ::popen(cmd.c_str(), "r");
  if (!pipe) return {-1, {}};
  std::string out;
  std::array<char, 4096> buf;
  while (std::size_t n = std::fread(buf.data(), 1, buf.size(), pipe)) out.append(buf.data(), n);
  const int status = ::pclose(pipe);
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, out};
}

double score_of(const std::string& out) {
  const auto pos = out.find("score=");
  return pos == std::string::npos ? -1.0 : std::stod(out.substr(pos + 6));
}

std::size_t data_rows(const fs::path& csv_path) {
  std::ifstream in(csv_path);
  std::size_t lines = 0;
  for (std::string line; std::getline(in, line);)
    if (!line.empty()) ++lines;
  return lines ? lines - 1 : 0;
}

class Cli : public TempDirTest {
 protected:
  std::string d() const { return dir_.string(); }
  // One procedural scene with its full 37-image stack.
  void synth_stack(const std::string& sub, const std::string& extra = "") {
    ASSERT_EQ(run("synth --procedural 1 --width 64 --height 48 --out " + d() + "/" + sub + " " + extra).code, 0);
  }
};

TEST_F(Cli, SynthDefaultsGive37Rows) {
  const auto r = run("synth --procedural 1 --width 64 --height 48 --out " + d() + "/s");
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("manifest.csv"), std::string::npos);
  EXPECT_EQ(data_rows(dir_ / "s" / "manifest.csv"), 37u);
  EXPECT_EQ(data_rows(dir_ / "s" / "samples.csv"), 37u);
}

TEST_F(Cli, SynthSingleLevelSingleCondition) {
  synth_stack("s", "--k-levels 1 --conditions uniform");
  EXPECT_EQ(data_rows(dir_ / "s" / "manifest.csv"), 2u);
}

TEST_F(Cli, SynthFromSceneFiles) {
  const auto scene = make_procedural_scene(40, 30, 77);
  save_image(scene.image, dir_ / "clear.png");
  save_map(scene.depth.map(), dir_ / "clear.pfm");
  const auto r = run("synth --scene " + d() + "/clear.png --depth " + d() + "/clear.pfm --k-values 0.01,0.02,0.04 --out " +
                     d() + "/s");
  EXPECT_EQ(r.code, 0);
  EXPECT_EQ(data_rows(dir_ / "s" / "manifest.csv"), 13u);
  EXPECT_TRUE(fs::exists(dir_ / "s" / "clear_cloudy-sky_3.png"));
  EXPECT_EQ(run("synth --scene " + d() + "/clear.png --out " + d() + "/t").code, 1);
  EXPECT_EQ(run("synth --procedural 1 --k-values 0.02,0.01 --out " + d() + "/u").code, 1);
}

TEST_F(Cli, SynthRerunIsByteIdentical) {
  synth_stack("a", "--seed 9");
  synth_stack("b", "--seed 9");
  for (const auto& entry : fs::directory_iterator(dir_ / "a"))
    EXPECT_EQ(read_text(entry.path()), read_text(dir_ / "b" / entry.path().filename())) << entry.path();
}

TEST_F(Cli, EstimateOrdersHeavyAboveClear) {
  synth_stack("s");
  const std::string depth = " --depth " + d() + "/s/scene001_depth.pfm --gf-radius 8";
  const auto clear = run("estimate --image " + d() + "/s/scene001.png" + depth);
  const auto heavy = run("estimate --image " + d() + "/s/scene001_uniform_9.png" + depth);
  ASSERT_EQ(clear.code, 0);
  ASSERT_EQ(heavy.code, 0);
  EXPECT_NE(clear.out.find("variant=raw|unit|loglog1p|d_over_t|median|dnorm=0"), std::string::npos);
  EXPECT_GT(score_of(heavy.out), score_of(clear.out));
  EXPECT_EQ(run("estimate --image " + d() + "/s/scene001.png" + depth).out, clear.out);
}

TEST_F(Cli, EstimateErrors) {
  synth_stack("s", "--k-levels 1 --conditions uniform");
  const std::string image = " --image " + d() + "/s/scene001.png";
  EXPECT_EQ(run("estimate" + image + " --variant 'raw|unit'").code, 1);
  EXPECT_EQ(run("estimate --image " + d() + "/missing.png").code, 1);
  EXPECT_EQ(run("estimate" + image + " --depth " + d() + "/missing.pfm").code, 1);
  EXPECT_EQ(run("estimate" + image + " --depth x --depth-uniform 3").code, 1);
  EXPECT_EQ(run("--patch-size 4 estimate" + image).code, 1);
  EXPECT_EQ(run("estimate" + image + " --omega 0").code, 1);
  EXPECT_EQ(run("estimate").code, 1);
  EXPECT_EQ(run("").code, 1);
  EXPECT_EQ(run("frobnicate").code, 1);
  EXPECT_EQ(run("--help").code, 0);
}

TEST_F(Cli, EstimateWithCalibration) {
  synth_stack("s", "--k-levels 1 --conditions uniform");
  save_calibration({1.0, 2.0, 1}, dir_ / "cal.json");
  const auto r = run("estimate --image " + d() + "/s/scene001.png --depth-uniform 1 --variant 'raw|unit|unit|d_over_t|mean|dnorm=0' --calibration " +
                     d() + "/cal.json");
  ASSERT_EQ(r.code, 0);
  const double s = score_of(r.out);
  const std::string level = s < 1.0 ? "Clear" : s < 2.0 ? "Light" : "Heavy";
  EXPECT_NE(r.out.find(" level=" + level), std::string::npos) << r.out;
  write_text(dir_ / "bad.json", "{}");
  EXPECT_EQ(run("estimate --image " + d() + "/s/scene001.png --calibration " + d() + "/bad.json").code, 1);
}

TEST_F(Cli, ConfigFileAndFlagPrecedence) {
  synth_stack("s", "--k-levels 1 --conditions uniform");
  const std::string image = " --image " + d() + "/s/scene001.png --depth-uniform 2";
  const auto base = run("--patch-size 7 --gf-radius 8 estimate" + image + " --variant 'refined|unit|unit|t_only|mean|dnorm=0'");
  write_text(dir_ / "cfg.toml", "patch-size = 7\ngf-radius = 8\n[estimate]\nvariant = \"refined|unit|unit|t_only|mean|dnorm=0\"\n");
  const auto from_config = run("--config " + d() + "/cfg.toml estimate" + image);
  ASSERT_EQ(from_config.code, 0);
  EXPECT_EQ(from_config.out, base.out);
  const auto overridden = run("--config " + d() + "/cfg.toml --patch-size 3 estimate" + image);
  EXPECT_NE(overridden.out, base.out);
  EXPECT_EQ(overridden.out, run("--patch-size 3 --gf-radius 8 estimate" + image +
                                " --variant 'refined|unit|unit|t_only|mean|dnorm=0'").out);
}

TEST_F(Cli, GridsearchFamiliesAndJobs) {
  synth_stack("s", "--k-levels 5");
  const std::string common = "gridsearch --gf-radius 8 --samples " + d() + "/s/samples.csv";
  const auto fam = run(common + " --families trans,depth,both,baselines --out " + d() + "/fam.csv");
  ASSERT_EQ(fam.code, 0);
  EXPECT_NE(fam.out.find("variants=600"), std::string::npos);
  const auto table = csv::read(dir_ / "fam.csv", results_header());
  ASSERT_EQ(table.rows.size(), 4u);
  EXPECT_EQ(table.rows[3][0].rfind("baseline:", 0), 0u);

  ASSERT_EQ(run(common + " --jobs 1 --out " + d() + "/j1.csv").code, 0);
  ASSERT_EQ(run(common + " --jobs 4 --out " + d() + "/j4.csv").code, 0);
  EXPECT_EQ(read_text(dir_ / "j1.csv"), read_text(dir_ / "j4.csv"));
  EXPECT_EQ(data_rows(dir_ / "j1.csv"), 603u);
  const auto top = csv::read(dir_ / "j1.csv", results_header()).rows.front();
  EXPECT_GE(std::stod(top[1]), 0.95);
}

TEST_F(Cli, GridsearchErrors) {
  write_text(dir_ / "empty.csv", "path,truth_kind,truth_value,depth_kind,depth_path\n");
  EXPECT_EQ(run("gridsearch --samples " + d() + "/empty.csv").code, 1);
  EXPECT_EQ(run("gridsearch --samples " + d() + "/none.csv").code, 1);
  synth_stack("s", "--k-levels 2 --conditions uniform");
  EXPECT_EQ(run("gridsearch --samples " + d() + "/s/samples.csv --families trans,fog").code, 1);
}

TEST_F(Cli, EvalVariantBaselineAndCalibration) {
  synth_stack("s", "--k-levels 3 --conditions uniform");
  // Relabel the 4 images as ordinal classes 0,1,1,2 for calibration.
  auto samples = read_samples(dir_ / "s" / "samples.csv");
  ASSERT_EQ(samples.size(), 4u);
  const int labels[] = {0, 1, 1, 2};
  for (std::size_t i = 0; i < samples.size(); ++i) samples[i].truth = {Truth::Kind::ordinal, static_cast<double>(labels[i])};
  write_samples(dir_ / "s" / "ordinal.csv", samples);

  const auto r = run("eval --gf-radius 8 --samples " + d() + "/s/ordinal.csv --scores-out " + d() + "/scores.csv --calibration-out " +
                     d() + "/cal.json");
  ASSERT_EQ(r.code, 0) << r.out;
  EXPECT_NE(r.out.find("n=4"), std::string::npos);
  EXPECT_EQ(data_rows(dir_ / "scores.csv"), 4u);
  EXPECT_NO_THROW(load_calibration(dir_ / "cal.json"));

  const auto b = run("eval --samples " + d() + "/s/samples.csv --baseline contrast_rms");
  EXPECT_EQ(b.code, 0);
  EXPECT_NE(b.out.find("variant=baseline:contrast_rms"), std::string::npos);
  EXPECT_EQ(run("eval --samples " + d() + "/s/samples.csv --calibration-out " + d() + "/c2.json").code, 1);
  EXPECT_EQ(run("eval --samples " + d() + "/s/samples.csv --baseline nope").code, 1);
}

TEST_F(Cli, JoinExamples) {
  write_text(dir_ / "photos.csv",
             "path,timestamp\n"
             "near.png,2014-01-05T13:20:00Z\n"
             "tie.png,2014-01-05T13:30:00Z\n"
             "far.png,2014-01-05T16:31:00Z\n"
             "bad.png,whenever\n");
  write_text(dir_ / "pm.csv",
             "timestamp,pm25\n2014-01-05T14:00:00Z,80\n2014-01-05T13:00:00Z,120\n2014-01-05T18:30:00Z,40\n"
             "2014-01-05T19:00:00Z,-999\n");
  const auto r = run("join --manifest " + d() + "/photos.csv --pm25 " + d() + "/pm.csv --out " + d() + "/samples.csv");
  ASSERT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("joined=2 excluded=1 invalid=1 dropped_records=1"), std::string::npos) << r.out;
  const auto samples = read_samples(dir_ / "samples.csv");
  ASSERT_EQ(samples.size(), 2u);
  EXPECT_EQ(samples[0].image_path.filename(), "near.png");
  EXPECT_EQ(samples[0].truth.value, 120.0);
  EXPECT_EQ(samples[1].image_path.filename(), "tie.png");
  EXPECT_EQ(samples[1].truth.value, 120.0);

  const auto wide = run("join --tolerance 90 --manifest " + d() + "/photos.csv --pm25 " + d() + "/pm.csv --out " + d() + "/w.csv");
  EXPECT_NE(wide.out.find("joined=3"), std::string::npos);
  EXPECT_EQ(run("join --manifest " + d() + "/nope.csv --pm25 " + d() + "/pm.csv --out " + d() + "/x.csv").code, 1);
  EXPECT_EQ(run("join --tolerance -1 --manifest " + d() + "/photos.csv --pm25 " + d() + "/pm.csv --out " + d() + "/x.csv").code, 1);
}

}  // namespace
