#include "cbe/pipeline.hpp"

#include <gtest/gtest.h>

#include <cstdlib>
#include <json.hpp>

#include "cbe/synthetic.hpp"
#include "test_util.hpp"

using namespace cbe::pipeline;
using cbe::testing::read_text;
using cbe::testing::TempDir;
using cbe::testing::write_text;
namespace fs = std::filesystem;

namespace {

struct CliResult {
  int status;
  std::string out;
  std::string err;
};

CliResult run_cli(const std::string& args, const TempDir& scratch) {
  const auto out = scratch / "cli.out", err = scratch / "cli.err";
  const std::string cmd = std::string(CBE_CLI) + " " + args + " > " + out.string() + " 2> " + err.string();
  const int rc = std::system(cmd.c_str());
  return {WIFEXITED(rc) ? WEXITSTATUS(rc) : -1, read_text(out), read_text(err)};
}

std::size_t count_lines(const std::string& s) { return std::count(s.begin(), s.end(), '\n'); }

// A small planted corpus with settings that keep a full matrix under a few seconds.
fs::path small_project(const TempDir& dir) {
  cbe::synthetic::PlantedConfig planted;
  planted.posts = 80;
  planted.entities_per_community = 10;
  planted.seed = 3;
  cbe::synthetic::write_planted(planted, dir.path());
  const auto conf = dir / "small.conf";
  write_text(conf,
             "paths.corpus = corpus.tsv\n"
             "paths.kg = graph.nt\n"
             "paths.gazetteer = gazetteer.tsv\n"
             "paths.curation = " + (cbe::testing::data_dir() / "curation_default.tsv").string() + "\n"
             "paths.output = out\n"
             "walk.max_depth = 2\nwalk.max_walks = 5\n"
             "text.dim = 8\ntext.epochs = 3\nkg.dim = 8\nkg.epochs = 1\n"
             "eval.folds = 3\n"
             "grid.logreg.l2 = 0.01\ngrid.mlp.hidden = 4\ngrid.knn.k = 3, 5\n");
  return conf;
}

std::vector<fs::path> artifacts(const fs::path& out) {
  std::vector<fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(out)) {
    if (e.is_regular_file() && !e.path().string().ends_with(kManifestSuffix)) files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  return files;
}

void expect_manifests_match(const fs::path& out, const PipelineConfig& cfg) {
  const auto expected = config_hash(cfg);
  const auto files = artifacts(out);
  ASSERT_FALSE(files.empty());
  for (const auto& f : files) {
    const auto mp = manifest_path(f);
    ASSERT_TRUE(fs::exists(mp)) << f;
    const auto m = nlohmann::json::parse(read_text(mp));
    EXPECT_EQ(m.at("config_hash").get<std::string>(), expected) << f;
    EXPECT_EQ(m.at("artifact_sha256").get<std::string>(), file_sha256(f)) << f;
    for (const char* seed : {"walk.seed", "text.seed", "kg.seed", "eval.seed"}) {
      EXPECT_TRUE(m.at("seeds").contains(seed)) << f;
    }
    EXPECT_FALSE(m.at("created").get<std::string>().empty());
  }
}

class EnvGuard {
 public:
  EnvGuard(const char* name, const char* value) : name_(name) { ::setenv(name, value, 1); }
  ~EnvGuard() { ::unsetenv(name_); }

 private:
  const char* name_;
};

}  // namespace

TEST(Config, Precedence) {
  TempDir dir("cfg");
  write_text(dir / "a.conf", "# comment\ntext.dim = 10\npaths.corpus = c.tsv\n");
  const auto file = std::optional<fs::path>(dir / "a.conf");
  EXPECT_EQ(load_config(file, {}).text_sgns.dim, 10u);
  EXPECT_EQ(load_config(file, {}).corpus, dir / "c.tsv");
  {
    EnvGuard env("CBE_TEXT_DIM", "12");
    EXPECT_EQ(load_config(file, {}).text_sgns.dim, 12u);
    EXPECT_EQ(load_config(file, {{"text.dim", "14"}}).text_sgns.dim, 14u);
    EXPECT_EQ(load_config(file, {}, false).text_sgns.dim, 10u);
  }
  EXPECT_EQ(env_var_for("text.dim"), "CBE_TEXT_DIM");
  EXPECT_EQ(env_var_for("grid.knn.k"), "CBE_GRID_KNN_K");
}

TEST(Config, Validation) {
  PipelineConfig cfg;
  EXPECT_CBE_ERROR(cfg.set("text.dimension", "3"), InvalidConfig);
  EXPECT_CBE_ERROR(cfg.set("text.dim", "many"), InvalidConfig);
  EXPECT_CBE_ERROR(cfg.set("eval.models", "svm"), InvalidConfig);
  EXPECT_CBE_ERROR(cfg.set("grid.knn.hidden", "3"), InvalidConfig);
  EXPECT_CBE_ERROR(cfg.set("fusion.strategy", "max"), InvalidConfig);
  cfg.set("eval.models", "knn, logreg");
  EXPECT_EQ(cfg.models.size(), 2u);
  cfg.set("grid.knn.k", "3, 7");
  EXPECT_EQ(cfg.to_map().at("grid.knn.k"), "3,7");
  TempDir dir("cfgbad");
  write_text(dir / "bad.conf", "text.dim 5\n");
  EXPECT_CBE_ERROR(load_config(dir / "bad.conf", {}), InvalidConfig);
  for (const auto& key : config_keys()) EXPECT_TRUE(PipelineConfig().to_map().count(key)) << key;
}

TEST(Config, HashTracksCanonicalForm) {
  PipelineConfig a, b;
  EXPECT_EQ(config_hash(a), config_hash(b));
  b.set("sif.a", "0.01");
  EXPECT_NE(config_hash(a), config_hash(b));
  EXPECT_EQ(sha256_hex("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST(Pipeline, MissingCorpusNamesThePath) {
  PipelineConfig cfg;
  EXPECT_CBE_ERROR(Pipeline{cfg}, InvalidConfig);
  cfg.corpus = "/nonexistent/posts.tsv";
  try {
    Pipeline p(cfg);
    FAIL();
  } catch (const cbe::Error& e) {
    EXPECT_EQ(e.code(), cbe::ErrorCode::IoError);
    EXPECT_NE(std::string(e.what()).find("/nonexistent/posts.tsv"), std::string::npos);
  }
}

TEST(Pipeline, ManifestsAndCaching) {
  TempDir dir("pipe");
  const auto conf = small_project(dir);
  auto cfg = load_config(conf, {}, false);
  {
    Pipeline p(cfg);
    const auto results = p.matrix();
    EXPECT_EQ(count_lines(read_text(results)), 1u + 36u);
    auto done = p.computed_stages();
    std::sort(done.begin(), done.end());
    EXPECT_EQ(done, (std::vector<std::string>{"analyze", "bias-check", "embed-kg", "embed-text", "evaluate",
                                              "fuse", "ingest", "link", "train", "walk"}));
    expect_manifests_match(cfg.output, cfg);
  }
  {
    Pipeline p(cfg);
    p.matrix();
    EXPECT_TRUE(p.computed_stages().empty());
  }
  cfg.set("fusion.strategy", "sum");
  {
    Pipeline p(cfg);
    p.matrix();
    const auto& done = p.computed_stages();
    for (const char* stage : {"ingest", "link", "walk", "embed-kg", "embed-text"}) {
      EXPECT_EQ(std::count(done.begin(), done.end(), stage), 0) << stage;
    }
    EXPECT_EQ(std::count(done.begin(), done.end(), "fuse"), 1);
    expect_manifests_match(cfg.output, cfg);
  }
  // a corrupted artifact is rebuilt
  write_text(cfg.output / "walks.txt", "tampered\n");
  Pipeline p(cfg);
  p.walk();
  EXPECT_EQ(p.computed_stages(), std::vector<std::string>{"walk"});
}

TEST(Pipeline, WorkspaceAndCells) {
  TempDir dir("cell");
  const auto conf = small_project(dir);
  auto cfg = load_config(conf, {}, false);
  Pipeline p(cfg);
  const auto ws = p.load_workspace();
  EXPECT_EQ(ws.corpus.size(), 80u);
  EXPECT_EQ(ws.tokens.size(), 80u);
  EXPECT_EQ(ws.qids.size(), 80u);
  EXPECT_EQ(ws.kge.dim, 8u);
  std::vector<std::size_t> train(60), test(20);
  std::iota(train.begin(), train.end(), 0);
  std::iota(test.begin(), test.end(), 60);
  const FeatureOptions opts{cfg.sif, cfg.strategy};
  EXPECT_EQ(build_features(ws, InputKind::Text, cbe::corpus::Task::ED1, train, test, opts).train.features.cols, 8u);
  EXPECT_EQ(build_features(ws, InputKind::Kge, cbe::corpus::Task::ED1, train, test, opts).test.features.cols, 8u);
  const auto fd = build_features(ws, InputKind::Cbe, cbe::corpus::Task::ED1, train, test, opts);
  EXPECT_EQ(fd.train.features.cols, 16u);
  EXPECT_EQ(fd.test.size(), 20u);
  const auto cell = run_cell(ws, cbe::learn::Family::Knn, InputKind::Cbe, cbe::corpus::Task::ED1, cfg);
  EXPECT_EQ(cell.test_rows.size(), 24u);
  EXPECT_EQ(cell.prediction.labels.size(), 24u);
  EXPECT_TRUE(cell.chosen.count("k"));
}

TEST(Cli, MissingCorpus) {
  TempDir dir("climiss");
  const auto r = run_cli("ingest --set paths.corpus=/nonexistent/corpus.tsv --set paths.output=" +
                             (dir / "out").string(), dir);
  EXPECT_NE(r.status, 0);
  EXPECT_EQ(count_lines(r.err), 1u);
  EXPECT_EQ(r.err.rfind("error\tIoError\t", 0), 0u) << r.err;
  EXPECT_NE(r.err.find("/nonexistent/corpus.tsv"), std::string::npos);
  EXPECT_NE(run_cli("ingest --set text.bogus=1", dir).status, 0);
  EXPECT_NE(run_cli("nonsense", dir).status, 0);
}

TEST(Cli, AnalyzeWithoutEmojis) {
  TempDir dir("cliemoji");
  write_text(dir / "c.tsv", "id\ttext\ted1\n1\tplain words here\t1\n2\tmore plain words\t0\n");
  const auto r = run_cli("analyze -q --set paths.corpus=" + (dir / "c.tsv").string() +
                             " --set paths.output=" + (dir / "out").string(), dir);
  ASSERT_EQ(r.status, 0) << r.err;
  const auto report = read_text(dir / "out" / "analysis.tsv");
  EXPECT_NE(report.find("corpus\temoji_fraction\t0.000000\n"), std::string::npos) << report;
  EXPECT_NE(report.find("corpus\tposts_with_emoji\t0\n"), std::string::npos);
  EXPECT_NE(report.find("overlap\ted1:emoji\tNA\n"), std::string::npos);
}

TEST(Cli, MatrixIsDeterministic) {
  TempDir dir("clidet");
  const auto conf = small_project(dir);
  const auto base = "matrix -q --deterministic -c " + conf.string() + " --set paths.output=";
  const auto a = run_cli(base + (dir / "a").string(), dir);
  ASSERT_EQ(a.status, 0) << a.err;
  EXPECT_EQ(a.out, (dir / "a" / "results.tsv").string() + "\n");
  const auto b = run_cli(base + (dir / "b").string(), dir);
  ASSERT_EQ(b.status, 0) << b.err;
  for (const char* f : {"results.tsv", "predictions.tsv", "bias.tsv", "kge.emb", "text.emb", "features_cbe.tsv"}) {
    EXPECT_EQ(read_text(dir / "a" / f), read_text(dir / "b" / f)) << f;
  }
}

TEST(Cli, BundledFixtureMatrix) {
  TempDir dir("clifix");
  const auto conf = cbe::testing::data_dir() / "fixture" / "cbe.conf";
  const auto r = run_cli("matrix -q --deterministic -c " + conf.string() + " --set paths.output=" +
                             (dir / "out").string(), dir);
  ASSERT_EQ(r.status, 0) << r.err;
  const auto results = read_text(dir / "out" / "results.tsv");
  EXPECT_EQ(results.substr(0, results.find('\n')), "model\tinput\ttask\tf1\taccuracy");
  EXPECT_EQ(count_lines(results), 37u);
}
