#include "cbe/pipeline.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <json.hpp>
#include <set>
#include <sstream>

#include "cbe/error.hpp"
#include "cbe/kgstore.hpp"
#include "cbe/linker.hpp"
#include "cbe/rng.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace cbe::pipeline {

std::string_view linker_mode_name(LinkerMode m) {
  switch (m) {
    case LinkerMode::Gazetteer: return "gazetteer";
    case LinkerMode::Remote: return "remote";
    case LinkerMode::Union: return "union";
  }
  return "?";
}

LinkerMode parse_linker_mode(std::string_view s) {
  if (s == "gazetteer") return LinkerMode::Gazetteer;
  if (s == "remote") return LinkerMode::Remote;
  if (s == "union") return LinkerMode::Union;
  throw Error(ErrorCode::InvalidConfig, "unknown linker mode '" + std::string(s) + "'");
}

std::string_view input_kind_name(InputKind k) {
  switch (k) {
    case InputKind::Text: return "text";
    case InputKind::Kge: return "kge";
    case InputKind::Cbe: return "cbe";
  }
  return "?";
}

InputKind parse_input_kind(std::string_view s) {
  if (s == "text") return InputKind::Text;
  if (s == "kge") return InputKind::Kge;
  if (s == "cbe") return InputKind::Cbe;
  throw Error(ErrorCode::InvalidConfig, "unknown input kind '" + std::string(s) + "'");
}

// ---------------------------------------------------------------------------
// Config

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_list(std::string_view s) {
  std::vector<std::string> out;
  std::size_t pos = 0;
  while (pos <= s.size()) {
    auto next = s.find(',', pos);
    if (next == std::string_view::npos) next = s.size();
    auto item = trim(s.substr(pos, next - pos));
    if (!item.empty()) out.push_back(std::move(item));
    pos = next + 1;
  }
  return out;
}

[[noreturn]] void bad_value(std::string_view key, std::string_view value) {
  throw Error(ErrorCode::InvalidConfig,
              "invalid value '" + std::string(value) + "' for " + std::string(key));
}

double to_double(std::string_view key, std::string_view v) {
  double x = 0.0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), x);
  if (ec != std::errc() || p != v.data() + v.size()) bad_value(key, v);
  return x;
}

std::uint64_t to_uint(std::string_view key, std::string_view v) {
  std::uint64_t x = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), x);
  if (ec != std::errc() || p != v.data() + v.size()) bad_value(key, v);
  return x;
}

bool to_bool(std::string_view key, std::string_view v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  bad_value(key, v);
}

std::string num(double x) {
  char buf[64];
  const auto [p, ec] = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, p);
}

std::string flag(bool b) { return b ? "true" : "false"; }

std::string path_str(const fs::path& p) { return p.empty() ? "" : p.string(); }

fs::path resolve(std::string_view value, const fs::path& base) {
  if (value.empty()) return {};
  fs::path p(value);
  if (p.is_relative() && !base.empty()) p = base / p;
  return p.lexically_normal();
}

void set_sgns(embed::SgnsConfig& c, std::string_view key, std::string_view field,
              std::string_view v) {
  if (field == "dim") c.dim = to_uint(key, v);
  else if (field == "window") c.window = to_uint(key, v);
  else if (field == "negatives") c.negatives = to_uint(key, v);
  else if (field == "epochs") c.epochs = to_uint(key, v);
  else if (field == "lr") c.learning_rate = to_double(key, v);
  else if (field == "min_lr") c.min_learning_rate = to_double(key, v);
  else if (field == "subsample") c.subsample_threshold = to_double(key, v);
  else if (field == "min_count") c.min_count = to_uint(key, v);
  else if (field == "seed") c.seed = to_uint(key, v);
  else throw Error(ErrorCode::InvalidConfig, "unknown config key " + std::string(key));
}

void put_sgns(std::map<std::string, std::string>& m, const std::string& prefix,
              const embed::SgnsConfig& c) {
  m[prefix + "dim"] = std::to_string(c.dim);
  m[prefix + "window"] = std::to_string(c.window);
  m[prefix + "negatives"] = std::to_string(c.negatives);
  m[prefix + "epochs"] = std::to_string(c.epochs);
  m[prefix + "lr"] = num(c.learning_rate);
  m[prefix + "min_lr"] = num(c.min_learning_rate);
  m[prefix + "subsample"] = num(c.subsample_threshold);
  m[prefix + "min_count"] = std::to_string(c.min_count);
  m[prefix + "seed"] = std::to_string(c.seed);
}

const std::set<std::string>& grid_params(learn::Family f) {
  static const std::set<std::string> logreg = {"l2", "lr", "epochs"};
  static const std::set<std::string> mlp = {"hidden", "l2", "lr", "epochs"};
  static const std::set<std::string> knn = {"k", "metric"};
  switch (f) {
    case learn::Family::LogReg: return logreg;
    case learn::Family::Mlp: return mlp;
    case learn::Family::Knn: return knn;
  }
  return logreg;
}

}  // namespace

PipelineConfig::PipelineConfig() {
  grids[learn::Family::LogReg] = {{"l2", {1e-4, 1e-2}}};
  grids[learn::Family::Mlp] = {{"hidden", {8, 16}}};
  grids[learn::Family::Knn] = {{"k", {5, 9}}, {"metric", {0, 1}}};
  text_sgns.dim = 50;
  kg_sgns.dim = 50;
}

void PipelineConfig::set(std::string_view key, std::string_view value, const fs::path& base_dir) {
  const std::string k(key);
  const std::string v = trim(value);
  if (k == "paths.corpus") corpus = resolve(v, base_dir);
  else if (k == "paths.kg") kg = resolve(v, base_dir);
  else if (k == "paths.gazetteer") gazetteer = resolve(v, base_dir);
  else if (k == "paths.curation") curation = resolve(v, base_dir);
  else if (k == "paths.additions") additions = resolve(v, base_dir);
  else if (k == "paths.text_embeddings") text_embeddings = resolve(v, base_dir);
  else if (k == "paths.output") {
    if (v.empty()) bad_value(k, v);
    output = resolve(v, base_dir);
  } else if (k == "linker.mode") linker_mode = parse_linker_mode(v);
  else if (k == "linker.remote") remote_enabled = to_bool(k, v);
  else if (k == "linker.endpoint") remote_endpoint = v;
  else if (k == "linker.timeout_ms") remote_timeout_ms = to_uint(k, v);
  else if (k == "linker.concurrency") remote_concurrency = to_uint(k, v);
  else if (k == "preprocess.lowercase") preprocess.lowercase = to_bool(k, v);
  else if (k == "preprocess.remove_urls") preprocess.remove_urls = to_bool(k, v);
  else if (k == "preprocess.remove_mentions") preprocess.remove_mentions = to_bool(k, v);
  else if (k == "preprocess.remove_emojis") preprocess.remove_emojis = to_bool(k, v);
  else if (k == "walk.max_depth") walk.max_depth = to_uint(k, v);
  else if (k == "walk.max_walks") walk.max_walks = to_uint(k, v);
  else if (k == "walk.include_predicates") walk.include_predicates = to_bool(k, v);
  else if (k == "walk.seed") walk.seed = to_uint(k, v);
  else if (k.starts_with("text.")) set_sgns(text_sgns, k, std::string_view(k).substr(5), v);
  else if (k.starts_with("kg.")) set_sgns(kg_sgns, k, std::string_view(k).substr(3), v);
  else if (k == "sif.a") sif.a = to_double(k, v);
  else if (k == "sif.remove_pc") sif.remove_pc = to_bool(k, v);
  else if (k == "fusion.strategy") strategy = fusion::parse_strategy(v);
  else if (k == "eval.models") {
    models.clear();
    for (const auto& m : split_list(v)) models.push_back(learn::parse_family(m));
    if (models.empty()) bad_value(k, v);
  } else if (k == "eval.inputs") {
    inputs.clear();
    for (const auto& i : split_list(v)) inputs.push_back(parse_input_kind(i));
    if (inputs.empty()) bad_value(k, v);
  } else if (k == "eval.tasks") {
    tasks.clear();
    for (const auto& t : split_list(v)) tasks.push_back(corpus::parse_task(t));
  } else if (k == "eval.train_ratio") train_ratio = to_double(k, v);
  else if (k == "eval.folds") folds = to_uint(k, v);
  else if (k == "eval.seed") eval_seed = to_uint(k, v);
  else if (k == "eval.metric") selection = eval::parse_selection_metric(v);
  else if (k == "eval.bias_top_n") bias_top_n = to_uint(k, v);
  else if (k == "eval.term_counting") {
    if (v == "tokens") term_counting = eval::TermCounting::Tokens;
    else if (v == "documents") term_counting = eval::TermCounting::Documents;
    else bad_value(k, v);
  } else if (k == "run.threads") {
    threads = to_uint(k, v);
    if (threads == 0) bad_value(k, v);
  } else if (k.starts_with("grid.")) {
    const auto rest = std::string_view(k).substr(5);
    const auto dot = rest.find('.');
    if (dot == std::string_view::npos) {
      throw Error(ErrorCode::InvalidConfig, "unknown config key " + k);
    }
    learn::Family fam;
    try {
      fam = learn::parse_family(rest.substr(0, dot));
    } catch (const Error&) {
      throw Error(ErrorCode::InvalidConfig, "unknown config key " + k);
    }
    const std::string param(rest.substr(dot + 1));
    if (!grid_params(fam).count(param)) {
      throw Error(ErrorCode::InvalidConfig, "unknown config key " + k);
    }
    std::vector<double> values;
    for (const auto& item : split_list(v)) values.push_back(to_double(k, item));
    if (values.empty()) bad_value(k, v);
    auto& g = grids[fam];
    auto it = std::find_if(g.begin(), g.end(), [&](const auto& a) { return a.name == param; });
    if (it == g.end()) {
      g.push_back({param, std::move(values)});
      std::sort(g.begin(), g.end(), [](const auto& a, const auto& b) { return a.name < b.name; });
    } else {
      it->values = std::move(values);
    }
  } else {
    throw Error(ErrorCode::InvalidConfig, "unknown config key " + k);
  }
}

void PipelineConfig::make_deterministic() { threads = 1; }

std::map<std::string, std::string> PipelineConfig::to_map() const {
  std::map<std::string, std::string> m;
  m["paths.corpus"] = path_str(corpus);
  m["paths.kg"] = path_str(kg);
  m["paths.gazetteer"] = path_str(gazetteer);
  m["paths.curation"] = path_str(curation);
  m["paths.additions"] = path_str(additions);
  m["paths.text_embeddings"] = path_str(text_embeddings);
  m["paths.output"] = path_str(output);
  m["linker.mode"] = std::string(linker_mode_name(linker_mode));
  m["linker.remote"] = flag(remote_enabled);
  m["linker.endpoint"] = remote_endpoint;
  m["linker.timeout_ms"] = std::to_string(remote_timeout_ms);
  m["linker.concurrency"] = std::to_string(remote_concurrency);
  m["preprocess.lowercase"] = flag(preprocess.lowercase);
  m["preprocess.remove_urls"] = flag(preprocess.remove_urls);
  m["preprocess.remove_mentions"] = flag(preprocess.remove_mentions);
  m["preprocess.remove_emojis"] = flag(preprocess.remove_emojis);
  m["walk.max_depth"] = std::to_string(walk.max_depth);
  m["walk.max_walks"] = std::to_string(walk.max_walks);
  m["walk.include_predicates"] = flag(walk.include_predicates);
  m["walk.seed"] = std::to_string(walk.seed);
  put_sgns(m, "text.", text_sgns);
  put_sgns(m, "kg.", kg_sgns);
  m["sif.a"] = num(sif.a);
  m["sif.remove_pc"] = flag(sif.remove_pc);
  m["fusion.strategy"] = std::string(fusion::strategy_name(strategy));
  auto join = [](const auto& items, auto name) {
    std::string s;
    for (const auto& x : items) {
      if (!s.empty()) s += ',';
      s += name(x);
    }
    return s;
  };
  m["eval.models"] = join(models, [](learn::Family f) { return std::string(learn::family_name(f)); });
  m["eval.inputs"] = join(inputs, [](InputKind i) { return std::string(input_kind_name(i)); });
  m["eval.tasks"] = join(tasks, [](corpus::Task t) { return std::string(corpus::task_name(t)); });
  m["eval.train_ratio"] = num(train_ratio);
  m["eval.folds"] = std::to_string(folds);
  m["eval.seed"] = std::to_string(eval_seed);
  m["eval.metric"] = selection == eval::SelectionMetric::F1 ? "f1" : "accuracy";
  m["eval.bias_top_n"] = std::to_string(bias_top_n);
  m["eval.term_counting"] = term_counting == eval::TermCounting::Tokens ? "tokens" : "documents";
  m["run.threads"] = std::to_string(threads);
  for (const auto& [fam, grid] : grids) {
    for (const auto& axis : grid) {
      m["grid." + std::string(learn::family_name(fam)) + "." + axis.name] =
          join(axis.values, [](double x) { return num(x); });
    }
  }
  return m;
}

std::string PipelineConfig::canonical() const {
  std::string out;
  for (const auto& [k, v] : to_map()) out += k + "=" + v + "\n";
  return out;
}

const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys = [] {
    std::vector<std::string> k;
    for (const auto& [key, value] : PipelineConfig().to_map()) {
      if (!key.starts_with("grid.")) k.push_back(key);
    }
    return k;
  }();
  return keys;
}

std::string env_var_for(std::string_view key) {
  std::string out(kEnvPrefix);
  for (char c : key) {
    out += c == '.' ? '_' : static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  }
  return out;
}

PipelineConfig load_config(const std::optional<fs::path>& file,
                           const std::vector<std::pair<std::string, std::string>>& overrides,
                           bool use_environment) {
  PipelineConfig cfg;
  if (file) {
    std::ifstream in(*file);
    if (!in) throw Error(ErrorCode::IoError, "cannot read config " + file->string());
    const fs::path base = file->parent_path();
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      const auto t = trim(line);
      if (t.empty() || t[0] == '#') continue;
      const auto eq = t.find('=');
      if (eq == std::string::npos) {
        throw Error(ErrorCode::InvalidConfig, file->string() + ":" + std::to_string(line_no) +
                                                  ": expected key = value");
      }
      cfg.set(trim(t.substr(0, eq)), t.substr(eq + 1), base);
    }
  }
  if (use_environment) {
    std::vector<std::string> keys = config_keys();
    for (const auto& [fam, params] :
         {std::pair{learn::Family::LogReg, grid_params(learn::Family::LogReg)},
          std::pair{learn::Family::Mlp, grid_params(learn::Family::Mlp)},
          std::pair{learn::Family::Knn, grid_params(learn::Family::Knn)}}) {
      for (const auto& p : params) keys.push_back("grid." + std::string(learn::family_name(fam)) + "." + p);
    }
    for (const auto& key : keys) {
      if (const char* v = std::getenv(env_var_for(key).c_str())) cfg.set(key, v, fs::current_path());
    }
  }
  for (const auto& [k, v] : overrides) cfg.set(k, v, fs::current_path());
  return cfg;
}

// ---------------------------------------------------------------------------
// Hashing and file helpers

std::string sha256_hex(std::string_view data) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), md, &len, EVP_sha256(), nullptr) != 1) {
    throw Error(ErrorCode::IoError, "sha256 failed");
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += kHex[md[i] >> 4];
    out += kHex[md[i] & 15];
  }
  return out;
}

namespace {

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot read " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& p, std::string_view content) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  const fs::path tmp = p.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::IoError, "cannot write " + p.string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw Error(ErrorCode::IoError, "cannot write " + p.string());
  }
  fs::rename(tmp, p);
}

void require_file(const fs::path& p, std::string_view key) {
  if (p.empty()) throw Error(ErrorCode::InvalidConfig, std::string(key) + " is not set");
  if (!fs::is_regular_file(p)) throw Error(ErrorCode::IoError, "no such file: " + p.string());
}

std::string utc_now() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

}  // namespace

std::string file_sha256(const fs::path& path) { return sha256_hex(read_file(path)); }

std::string config_hash(const PipelineConfig& cfg) { return sha256_hex(cfg.canonical()); }

fs::path manifest_path(const fs::path& artifact) {
  return artifact.string() + std::string(kManifestSuffix);
}

// ---------------------------------------------------------------------------
// Features

namespace {

template <typename T>
std::vector<T> pick(const std::vector<T>& v, const std::vector<std::size_t>& rows) {
  std::vector<T> out;
  out.reserve(rows.size());
  for (auto r : rows) out.push_back(v[r]);
  return out;
}

std::pair<embed::SifOutput, embed::SifOutput> text_block(const Workspace& ws,
                                                         const std::vector<std::size_t>& train,
                                                         const std::vector<std::size_t>& test,
                                                         const FeatureOptions& opts) {
  if (ws.text_sentences) {
    const auto& table = *ws.text_sentences;
    auto lookup = [&](const std::vector<std::size_t>& rows) {
      embed::SifOutput out;
      for (auto r : rows) {
        const auto v = table.find(ws.corpus.posts()[r].id);
        out.missing.push_back(v.empty());
        out.vectors.push_back(v.empty() ? std::vector<double>(table.dim, 0.0)
                                        : std::vector<double>(v.begin(), v.end()));
      }
      return out;
    };
    return {lookup(train), lookup(test)};
  }
  const auto train_sents = pick(ws.tokens, train);
  const auto model = embed::SifModel::fit(train_sents, ws.text_words,
                                          embed::word_frequencies(train_sents), opts.sif);
  return {model.transform(train_sents, ws.text_words),
          model.transform(pick(ws.tokens, test), ws.text_words)};
}

std::pair<embed::SifOutput, embed::SifOutput> kg_block(const Workspace& ws,
                                                       const std::vector<std::size_t>& train,
                                                       const std::vector<std::size_t>& test,
                                                       const FeatureOptions& opts) {
  const auto train_q = pick(ws.qids, train);
  const auto enc = fusion::KgSentenceEncoder::fit(train_q, ws.kge, opts.sif);
  return {enc.transform(train_q, ws.kge), enc.transform(pick(ws.qids, test), ws.kge)};
}

std::vector<std::vector<double>> combine(InputKind input, const embed::SifOutput* text,
                                         const embed::SifOutput* kg, fusion::Strategy s) {
  if (input == InputKind::Text) return text->vectors;
  if (input == InputKind::Kge) return kg->vectors;
  std::vector<std::vector<double>> out;
  out.reserve(text->vectors.size());
  for (std::size_t i = 0; i < text->vectors.size(); ++i) {
    out.push_back(fusion::fuse(text->vectors[i], kg->vectors[i], s, kg->missing[i]).values);
  }
  return out;
}

learn::Dataset make_dataset(const Workspace& ws, corpus::Task task,
                            const std::vector<std::size_t>& rows,
                            const std::vector<std::vector<double>>& features) {
  learn::Dataset ds;
  ds.features = learn::Matrix::from_rows(features);
  for (auto r : rows) {
    ds.labels.push_back(ws.corpus.label(r, task));
    ds.ids.push_back(ws.corpus.posts()[r].id);
  }
  return ds;
}

}  // namespace

eval::FoldData build_features(const Workspace& ws, InputKind input, corpus::Task task,
                              const std::vector<std::size_t>& train_rows,
                              const std::vector<std::size_t>& test_rows,
                              const FeatureOptions& opts) {
  std::optional<std::pair<embed::SifOutput, embed::SifOutput>> text, kg;
  if (input != InputKind::Kge) text = text_block(ws, train_rows, test_rows, opts);
  if (input != InputKind::Text) kg = kg_block(ws, train_rows, test_rows, opts);
  auto train = combine(input, text ? &text->first : nullptr, kg ? &kg->first : nullptr,
                       opts.strategy);
  auto test = combine(input, text ? &text->second : nullptr, kg ? &kg->second : nullptr,
                      opts.strategy);
  const auto st = fusion::Standardizer::fit(train);
  return {make_dataset(ws, task, train_rows, st.apply(train)),
          make_dataset(ws, task, test_rows, st.apply(test))};
}

eval::FoldProvider make_provider(const Workspace& ws, InputKind input, corpus::Task task,
                                 const std::vector<std::size_t>& rows,
                                 const eval::FoldAssignment& folds, const FeatureOptions& opts) {
  return [&ws, input, task, rows, folds, opts](std::size_t f) {
    return build_features(ws, input, task, pick(rows, folds.complement(f)),
                          pick(rows, folds.fold(f)), opts);
  };
}

CellResult run_cell(const Workspace& ws, learn::Family family, InputKind input,
                    corpus::Task task, const PipelineConfig& cfg) {
  const std::string tname(corpus::task_name(task));
  const auto labels = ws.corpus.labels_for(task);
  const auto split =
      eval::stratified_split(labels, cfg.train_ratio, derive_seed(cfg.eval_seed, "split:" + tname));
  const auto folds = eval::stratified_kfold(pick(labels, split.train), cfg.folds,
                                            derive_seed(cfg.eval_seed, "folds:" + tname));
  const FeatureOptions opts{cfg.sif, cfg.strategy};
  const auto provider = make_provider(ws, input, task, split.train, folds, opts);
  eval::Grid grid;
  if (auto it = cfg.grids.find(family); it != cfg.grids.end()) grid = it->second;
  const std::uint64_t seed = derive_seed(cfg.eval_seed, "model:" + tname);
  const auto gs =
      eval::grid_search(family, grid, provider, cfg.folds, cfg.selection, seed, cfg.threads);
  const auto data = build_features(ws, input, task, split.train, split.test, opts);
  auto model = learn::train_model(family, gs.best(), data.train, seed);
  auto prediction = learn::predict(model, data.test.features);
  return {family, input, task, gs.best(), split.test, std::move(prediction), std::move(model)};
}

// ---------------------------------------------------------------------------
// Stages

Pipeline::Pipeline(PipelineConfig cfg, std::ostream* log) : cfg_(std::move(cfg)), log_(log) {
  cfg_.walk.threads = cfg_.threads;
  cfg_.text_sgns.threads = cfg_.threads;
  cfg_.kg_sgns.threads = cfg_.threads;
  require_file(cfg_.corpus, "paths.corpus");
  for (const auto* p : {&cfg_.kg, &cfg_.gazetteer, &cfg_.curation, &cfg_.additions,
                        &cfg_.text_embeddings}) {
    if (!p->empty() && !fs::is_regular_file(*p)) {
      throw Error(ErrorCode::IoError, "no such file: " + p->string());
    }
  }
  if (cfg_.train_ratio <= 0.0 || cfg_.train_ratio >= 1.0) {
    throw Error(ErrorCode::InvalidConfig, "eval.train_ratio must lie in (0, 1)");
  }
  cfg_.walk.validate();
  cfg_.text_sgns.validate();
  cfg_.kg_sgns.validate();
  cfg_.sif.validate();
}

void Pipeline::note(const std::string& msg) {
  if (log_) *log_ << msg << '\n';
}

std::string Pipeline::stage_key(const std::string& stage,
                                const std::map<std::string, std::string>& inputs,
                                const std::vector<std::string>& config_prefixes) const {
  std::string material = "stage=" + stage + "\n";
  for (const auto& [k, v] : inputs) material += "input." + k + "=" + v + "\n";
  for (const auto& [k, v] : cfg_.to_map()) {
    for (const auto& prefix : config_prefixes) {
      if (k.starts_with(prefix)) {
        material += k + "=" + v + "\n";
        break;
      }
    }
  }
  return sha256_hex(material);
}

bool Pipeline::reuse(const fs::path& artifact, const std::string& key) {
  const auto mp = manifest_path(artifact);
  if (!fs::is_regular_file(artifact) || !fs::is_regular_file(mp)) return false;
  json m;
  try {
    m = json::parse(read_file(mp));
  } catch (const json::exception&) {
    return false;
  }
  if (m.value("cache_key", "") != key) return false;
  if (m.value("artifact_sha256", "") != file_sha256(artifact)) return false;
  // The config may differ only in keys this stage ignores; point every manifest
  // written under this key (side artifacts included) at the current config.
  const auto h = config_hash(cfg_);
  if (m.value("config_hash", "") == h) return true;
  for (const auto& entry : fs::recursive_directory_iterator(cfg_.output)) {
    const auto name = entry.path().filename().string();
    if (!entry.is_regular_file() || !name.ends_with(kManifestSuffix)) continue;
    json other;
    try {
      other = json::parse(read_file(entry.path()));
    } catch (const json::exception&) {
      continue;
    }
    if (other.value("cache_key", "") != key || other.value("config_hash", "") == h) continue;
    other["config_hash"] = h;
    write_file(entry.path(), other.dump(2) + "\n");
  }
  return true;
}

void Pipeline::record(const fs::path& artifact, const std::string& stage, const std::string& key,
                      const std::map<std::string, std::string>& inputs,
                      const std::map<std::string, std::uint64_t>& seeds) {
  json m;
  m["stage"] = stage;
  m["artifact"] = artifact.filename().string();
  m["artifact_sha256"] = file_sha256(artifact);
  m["cache_key"] = key;
  m["config_hash"] = config_hash(cfg_);
  m["inputs"] = inputs;
  json s = {{"walk.seed", cfg_.walk.seed},
            {"text.seed", cfg_.text_sgns.seed},
            {"kg.seed", cfg_.kg_sgns.seed},
            {"eval.seed", cfg_.eval_seed}};
  for (const auto& [k, v] : seeds) s[k] = v;
  m["seeds"] = s;
  m["threads"] = cfg_.threads;
  m["created"] = utc_now();
  write_file(manifest_path(artifact), m.dump(2) + "\n");
}

namespace {

std::string sha_or(const fs::path& p, std::string_view fallback) {
  return p.empty() ? std::string(fallback) : file_sha256(p);
}

std::vector<corpus::Task> tasks_for(const PipelineConfig& cfg, const corpus::LabeledCorpus& c) {
  if (cfg.tasks.empty()) return c.tasks();
  for (auto t : cfg.tasks) {
    if (!c.has_task(t)) {
      throw Error(ErrorCode::UnknownTask,
                  "task " + std::string(corpus::task_name(t)) + " is not labeled in the corpus");
    }
  }
  return cfg.tasks;
}

}  // namespace

fs::path Pipeline::ingest() {
  const fs::path out = cfg_.output / "corpus.tsv";
  const std::map<std::string, std::string> inputs = {{"corpus", file_sha256(cfg_.corpus)}};
  const auto key = stage_key("ingest", inputs, {"preprocess."});
  if (reuse(out, key)) return out;
  const auto raw = corpus::load_corpus(cfg_.corpus);
  if (raw.size() == 0) throw Error(ErrorCode::EmptyCorpus, "corpus has no posts: " + cfg_.corpus.string());
  const auto clean = corpus::preprocess_corpus(raw, cfg_.preprocess);
  write_file(out, corpus::serialize_corpus(clean, true));
  record(out, "ingest", key, inputs, {});
  computed_.push_back("ingest");
  note("ingest: " + std::to_string(clean.size()) + " posts");
  return out;
}

fs::path Pipeline::analyze() {
  const fs::path corpus_path = ingest();
  const fs::path out = cfg_.output / "analysis.tsv";
  const std::map<std::string, std::string> inputs = {{"corpus", file_sha256(corpus_path)}};
  const auto key = stage_key("analyze", inputs, {"eval.tasks"});
  if (reuse(out, key)) return out;
  const auto c = corpus::load_corpus(corpus_path);
  const auto stats = corpus::emoji_statistics(c);
  std::string tsv = "section\tname\tvalue\n";
  tsv += "corpus\tposts\t" + std::to_string(c.size()) + "\n";
  tsv += "corpus\tposts_with_emoji\t" + std::to_string(stats.posts_with_emoji) + "\n";
  tsv += "corpus\temoji_fraction\t" + eval::format_number(stats.fraction) + "\n";
  constexpr std::size_t kTopItems = 10;
  for (auto task : tasks_for(cfg_, c)) {
    const auto labels = c.labels_for(task);
    const auto pos = static_cast<std::size_t>(std::count(labels.begin(), labels.end(), 1));
    const std::string tname(corpus::task_name(task));
    tsv += "labels\t" + tname + ":1\t" + std::to_string(pos) + "\n";
    tsv += "labels\t" + tname + ":0\t" + std::to_string(labels.size() - pos) + "\n";
    for (auto kind : {corpus::ItemKind::Emoji, corpus::ItemKind::Unigram, corpus::ItemKind::Hashtag}) {
      const std::string kname(corpus::item_kind_name(kind));
      const auto [d0, d1] = corpus::class_distribution(c, task, kind, kTopItems);
      std::string overlap = "NA";
      try {
        overlap = eval::format_number(corpus::overlap_analysis(d0, d1));
      } catch (const Error& e) {
        if (e.code() != ErrorCode::BothEmpty) throw;
      }
      tsv += "overlap\t" + tname + ":" + kname + "\t" + overlap + "\n";
      const fs::path dist = cfg_.output / ("distribution_" + tname + "_" + kname + ".tsv");
      write_file(dist, corpus::distribution_tsv(d0, d1));
      record(dist, "analyze", key, inputs, {});
    }
  }
  write_file(out, tsv);
  record(out, "analyze", key, inputs, {});
  computed_.push_back("analyze");
  return out;
}

fs::path Pipeline::link() {
  const fs::path corpus_path = ingest();
  require_file(cfg_.gazetteer, "paths.gazetteer");
  const fs::path out = cfg_.output / "mentions.tsv";
  const std::map<std::string, std::string> inputs = {
      {"corpus", file_sha256(corpus_path)},
      {"gazetteer", file_sha256(cfg_.gazetteer)},
      {"curation", sha_or(cfg_.curation, "builtin")}};
  const auto key = stage_key("link", inputs, {"linker."});
  if (reuse(out, key)) return out;
  if (cfg_.linker_mode != LinkerMode::Gazetteer && !cfg_.remote_enabled) {
    throw Error(ErrorCode::InvalidConfig,
                "linker.mode " + std::string(linker_mode_name(cfg_.linker_mode)) +
                    " needs remote linking enabled (--remote-linker)");
  }
  const auto c = corpus::load_corpus(corpus_path);
  const auto gaz = linker::load_gazetteer(cfg_.gazetteer);
  const auto rules = cfg_.curation.empty() ? linker::default_curation_rules()
                                           : linker::load_curation_rules(cfg_.curation);
  std::map<std::string, std::string> type_of;
  for (const auto& [surface, entry] : gaz.entries()) {
    if (!entry.entity_type.empty()) type_of.emplace(entry.qid, entry.entity_type);
  }
  std::vector<std::vector<linker::EntityMention>> local(c.size());
  if (cfg_.linker_mode != LinkerMode::Remote) {
    for (std::size_t i = 0; i < c.size(); ++i) {
      local[i] = linker::recognize_gazetteer(c.posts()[i].clean_text, gaz);
    }
  }
  std::vector<std::vector<linker::EntityMention>> linked = local;
  if (cfg_.linker_mode != LinkerMode::Gazetteer) {
    linker::RemoteOptions ro;
    if (!cfg_.remote_endpoint.empty()) {
      ro.endpoint = cfg_.remote_endpoint;
    } else if (const char* env = std::getenv(std::string(linker::kRemoteEndpointEnv).c_str())) {
      ro.endpoint = env;
    }
    ro.timeout = std::chrono::milliseconds(cfg_.remote_timeout_ms);
    ro.max_concurrency = cfg_.threads == 1 ? 1 : cfg_.remote_concurrency;
    std::vector<std::string> texts;
    for (const auto& p : c.posts()) texts.push_back(p.clean_text);
    const auto remote = linker::recognize_remote_batch(texts, ro);
    std::size_t failures = 0;
    for (std::size_t i = 0; i < c.size(); ++i) {
      if (remote[i].error) {
        ++failures;
        continue;
      }
      linked[i] = cfg_.linker_mode == LinkerMode::Union
                      ? linker::merge_mentions(local[i], remote[i].mentions)
                      : remote[i].mentions;
    }
    if (failures) note("link: remote linker failed for " + std::to_string(failures) + " posts");
  }
  std::vector<std::string> ids;
  std::size_t total = 0;
  for (std::size_t i = 0; i < c.size(); ++i) {
    ids.push_back(c.posts()[i].id);
    linked[i] = linker::apply_curation(linked[i], rules, linker::TabuTypeList::defaults(), type_of);
    total += linked[i].size();
  }
  write_file(out, linker::serialize_mentions(ids, linked));
  record(out, "link", key, inputs, {});
  computed_.push_back("link");
  note("link: " + std::to_string(total) + " mentions");
  return out;
}

namespace {

// Curated QIDs per post, in corpus order; mentions flagged for curation are left out.
std::vector<std::vector<std::string>> post_qids(const corpus::LabeledCorpus& c,
                                                const fs::path& mentions_path) {
  const auto by_post = linker::parse_mentions(read_file(mentions_path));
  std::vector<std::vector<std::string>> out(c.size());
  for (std::size_t i = 0; i < c.size(); ++i) {
    auto it = by_post.find(c.posts()[i].id);
    if (it == by_post.end()) continue;
    for (const auto& m : it->second) {
      if (!m.needs_curation) out[i].push_back(m.qid);
    }
  }
  return out;
}

}  // namespace

fs::path Pipeline::walk() {
  const fs::path mentions = link();
  require_file(cfg_.kg, "paths.kg");
  const fs::path out = cfg_.output / "walks.txt";
  const std::map<std::string, std::string> inputs = {{"mentions", file_sha256(mentions)},
                                                     {"kg", file_sha256(cfg_.kg)},
                                                     {"additions", sha_or(cfg_.additions, "none")}};
  const auto key = stage_key("walk", inputs, {"walk.", "run.threads"});
  if (reuse(out, key)) return out;
  auto graph = kg::load_ntriples(cfg_.kg);
  if (!cfg_.additions.empty()) graph = kg::apply_additions(graph, kg::load_additions(cfg_.additions));
  std::set<std::string> seeds;
  for (const auto& [post, ms] : linker::parse_mentions(read_file(mentions))) {
    for (const auto& m : ms) {
      if (!m.needs_curation) seeds.insert(kg::qid_to_iri(m.qid));
    }
  }
  const auto result = walks::generate_walks(graph, {seeds.begin(), seeds.end()}, cfg_.walk);
  if (!result.unknown_seeds.empty()) {
    note("walk: " + std::to_string(result.unknown_seeds.size()) + " seeds not in the graph");
  }
  write_file(out, walks::serialize_walks(result));
  record(out, "walk", key, inputs, {});
  computed_.push_back("walk");
  return out;
}

fs::path Pipeline::embed_kg() {
  const fs::path walks_path = walk();
  const fs::path out = cfg_.output / "kge.emb";
  const std::map<std::string, std::string> inputs = {{"walks", file_sha256(walks_path)}};
  const auto key = stage_key("embed-kg", inputs, {"kg.", "run.threads"});
  if (reuse(out, key)) return out;
  const auto sequences = walks::parse_walk_corpus(read_file(walks_path));
  if (sequences.empty()) throw Error(ErrorCode::NoSentences, "no walks to embed: " + walks_path.string());
  embed::export_embeddings(embed::train_skipgram(sequences, cfg_.kg_sgns), out);
  record(out, "embed-kg", key, inputs, {});
  computed_.push_back("embed-kg");
  return out;
}

fs::path Pipeline::embed_text() {
  const fs::path corpus_path = ingest();
  const fs::path out = cfg_.output / "text.emb";
  const std::map<std::string, std::string> inputs = {
      {"corpus", file_sha256(corpus_path)}, {"external", sha_or(cfg_.text_embeddings, "none")}};
  const auto key = stage_key("embed-text", inputs, {"text.", "run.threads"});
  if (reuse(out, key)) return out;
  if (!cfg_.text_embeddings.empty()) {
    // Sentence vectors supplied from outside: validated and copied through.
    const auto table = embed::import_embeddings(cfg_.text_embeddings);
    embed::export_embeddings(table, out);
  } else {
    const auto c = corpus::load_corpus(corpus_path);
    std::vector<embed::Sequence> sentences;
    for (const auto& p : c.posts()) sentences.push_back(embed::tokenize(p.clean_text));
    embed::export_embeddings(embed::train_skipgram(sentences, cfg_.text_sgns), out);
  }
  record(out, "embed-text", key, inputs, {});
  computed_.push_back("embed-text");
  return out;
}

Workspace Pipeline::load_workspace() {
  const fs::path corpus_path = ingest();
  const fs::path mentions = link();
  const fs::path text = embed_text();
  const fs::path kge = embed_kg();
  Workspace ws;
  ws.corpus = corpus::load_corpus(corpus_path);
  for (const auto& p : ws.corpus.posts()) ws.tokens.push_back(embed::tokenize(p.clean_text));
  ws.qids = post_qids(ws.corpus, mentions);
  if (cfg_.text_embeddings.empty()) {
    ws.text_words = embed::import_embeddings(text);
  } else {
    ws.text_sentences = embed::import_embeddings(text);
  }
  ws.kge = embed::import_embeddings(kge);
  return ws;
}

fs::path Pipeline::fuse() {
  const fs::path corpus_path = ingest();
  const std::map<std::string, std::string> inputs = {
      {"corpus", file_sha256(corpus_path)},
      {"mentions", file_sha256(link())},
      {"text", file_sha256(embed_text())},
      {"kge", file_sha256(embed_kg())}};
  const auto key = stage_key("fuse", inputs, {"sif.", "fusion."});
  const fs::path out = cfg_.output / "features_cbe.tsv";
  std::vector<fs::path> outs;
  for (auto in : kAllInputs) {
    outs.push_back(cfg_.output / ("features_" + std::string(input_kind_name(in)) + ".tsv"));
  }
  if (std::all_of(outs.begin(), outs.end(), [&](const auto& p) { return reuse(p, key); })) return out;
  const auto ws = load_workspace();
  std::vector<std::size_t> all(ws.corpus.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  std::vector<std::string> label_names;
  for (auto t : ws.corpus.tasks()) label_names.emplace_back(corpus::task_name(t));
  std::vector<std::vector<int>> labels;
  for (auto t : ws.corpus.tasks()) labels.push_back(ws.corpus.labels_for(t));
  const auto task = ws.corpus.tasks().empty() ? corpus::Task::ED1 : ws.corpus.tasks().front();
  for (std::size_t k = 0; k < outs.size(); ++k) {
    // Features over the whole corpus, SIF and scaling fit on every post.
    const auto data = build_features(ws, kAllInputs[k], task, all, {}, {cfg_.sif, cfg_.strategy});
    std::vector<std::vector<double>> rows;
    std::vector<std::string> ids;
    for (std::size_t i = 0; i < data.train.size(); ++i) {
      const auto r = data.train.features.row(i);
      rows.emplace_back(r.begin(), r.end());
      ids.push_back(data.train.ids[i]);
    }
    write_file(outs[k], fusion::feature_matrix_tsv(ids, label_names, labels, rows));
    record(outs[k], "fuse", key, inputs, {});
  }
  computed_.push_back("fuse");
  return out;
}

namespace {

std::string params_string(const learn::Hyperparams& p) {
  std::string s;
  for (const auto& [k, v] : p) {
    if (!s.empty()) s += ';';
    s += k + "=" + num(v);
  }
  return s.empty() ? "default" : s;
}

struct PredictionRow {
  std::string model, input, task, id;
  int gold = 0;
  int predicted = 0;
};

std::vector<PredictionRow> parse_predictions(const std::string& content) {
  std::vector<PredictionRow> rows;
  std::istringstream in(content);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    if (++line_no == 1) continue;
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::size_t pos = 0;
    while (true) {
      const auto tab = line.find('\t', pos);
      f.push_back(line.substr(pos, tab == std::string::npos ? std::string::npos : tab - pos));
      if (tab == std::string::npos) break;
      pos = tab + 1;
    }
    if (f.size() != 7 || (f[4] != "0" && f[4] != "1") || (f[5] != "0" && f[5] != "1")) {
      throw Error(ErrorCode::MalformedRow, "predictions line " + std::to_string(line_no));
    }
    rows.push_back({f[0], f[1], f[2], f[3], f[4] == "1", f[5] == "1"});
  }
  return rows;
}

// Consecutive runs of rows sharing (model, input, task).
template <typename F>
void for_each_group(const std::vector<PredictionRow>& rows, F&& fn) {
  std::size_t b = 0;
  while (b < rows.size()) {
    std::size_t e = b;
    while (e < rows.size() && rows[e].model == rows[b].model && rows[e].input == rows[b].input &&
           rows[e].task == rows[b].task) {
      ++e;
    }
    fn(b, e);
    b = e;
  }
}

}  // namespace

fs::path Pipeline::train() {
  const fs::path corpus_path = ingest();
  const std::map<std::string, std::string> inputs = {
      {"corpus", file_sha256(corpus_path)},
      {"mentions", file_sha256(link())},
      {"text", file_sha256(embed_text())},
      {"kge", file_sha256(embed_kg())}};
  const auto key =
      stage_key("train", inputs, {"sif.", "fusion.", "eval.", "grid.", "run.threads"});
  const fs::path out = cfg_.output / "predictions.tsv";
  const fs::path selection = cfg_.output / "selection.tsv";
  if (reuse(out, key) && reuse(selection, key)) return out;
  const auto ws = load_workspace();
  std::string pred_tsv = "model\tinput\ttask\tid\tgold\tpredicted\tscore\n";
  std::string sel_tsv = "model\tinput\ttask\tparams\n";
  for (auto task : tasks_for(cfg_, ws.corpus)) {
    for (auto input : cfg_.inputs) {
      for (auto family : cfg_.models) {
        const auto cell = run_cell(ws, family, input, task, cfg_);
        const std::string prefix = std::string(learn::family_name(family)) + "\t" +
                                   std::string(input_kind_name(input)) + "\t" +
                                   std::string(corpus::task_name(task)) + "\t";
        for (std::size_t i = 0; i < cell.test_rows.size(); ++i) {
          const auto r = cell.test_rows[i];
          pred_tsv += prefix + ws.corpus.posts()[r].id + "\t" +
                      std::to_string(ws.corpus.label(r, task)) + "\t" +
                      std::to_string(cell.prediction.labels[i]) + "\t" +
                      eval::format_number(cell.prediction.scores[i]) + "\n";
        }
        sel_tsv += prefix + params_string(cell.chosen) + "\n";
        const fs::path model_path =
            cfg_.output / "models" /
            (std::string(learn::family_name(family)) + "_" + std::string(input_kind_name(input)) +
             "_" + std::string(corpus::task_name(task)) + ".model");
        write_file(model_path, learn::serialize_model(cell.model));
        record(model_path, "train", key, inputs, {});
        note("train: " + prefix.substr(0, prefix.size() - 1) + " " + params_string(cell.chosen));
      }
    }
  }
  write_file(out, pred_tsv);
  write_file(selection, sel_tsv);
  record(out, "train", key, inputs, {});
  record(selection, "train", key, inputs, {});
  computed_.push_back("train");
  return out;
}

fs::path Pipeline::evaluate() {
  const fs::path preds = train();
  const fs::path out = cfg_.output / "results.tsv";
  const std::map<std::string, std::string> inputs = {{"predictions", file_sha256(preds)}};
  const auto key = stage_key("evaluate", inputs, {});
  if (reuse(out, key)) return out;
  const auto rows = parse_predictions(read_file(preds));
  std::vector<eval::ResultRow> results;
  for_each_group(rows, [&](std::size_t b, std::size_t e) {
    std::vector<int> gold, pred;
    for (std::size_t i = b; i < e; ++i) {
      gold.push_back(rows[i].gold);
      pred.push_back(rows[i].predicted);
    }
    const auto m = eval::metrics(eval::confusion(gold, pred));
    results.push_back({rows[b].model, rows[b].input, rows[b].task, m.f1, m.accuracy});
  });
  write_file(out, eval::results_tsv(results));
  record(out, "evaluate", key, inputs, {});
  computed_.push_back("evaluate");
  return out;
}

fs::path Pipeline::bias_check() {
  const fs::path preds = train();
  const fs::path corpus_path = ingest();
  const fs::path out = cfg_.output / "bias.tsv";
  const std::map<std::string, std::string> inputs = {{"predictions", file_sha256(preds)},
                                                     {"corpus", file_sha256(corpus_path)}};
  const auto key = stage_key("bias-check", inputs, {"eval.bias_top_n", "eval.term_counting"});
  if (reuse(out, key)) return out;
  const auto c = corpus::load_corpus(corpus_path);
  std::map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < c.size(); ++i) index.emplace(c.posts()[i].id, i);
  const auto rows = parse_predictions(read_file(preds));
  std::vector<eval::BiasReport> reports;
  for_each_group(rows, [&](std::size_t b, std::size_t e) {
    std::vector<std::size_t> evaluated;
    std::vector<int> predicted;
    for (std::size_t i = b; i < e; ++i) {
      auto it = index.find(rows[i].id);
      if (it == index.end()) {
        throw Error(ErrorCode::MalformedRow, "prediction for unknown post " + rows[i].id);
      }
      evaluated.push_back(it->second);
      predicted.push_back(rows[i].predicted);
    }
    auto r = eval::bias_check(c, corpus::parse_task(rows[b].task), evaluated, predicted,
                              cfg_.bias_top_n, cfg_.term_counting);
    r.input_kind = rows[b].input;
    r.model = rows[b].model;
    reports.push_back(std::move(r));
  });
  write_file(out, eval::bias_tsv(reports));
  record(out, "bias-check", key, inputs, {});
  computed_.push_back("bias-check");
  return out;
}

fs::path Pipeline::matrix() {
  analyze();
  fuse();
  const auto results = evaluate();
  bias_check();
  return results;
}

std::vector<std::string> subcommands() {
  return {"ingest", "analyze", "link", "walk", "embed-text", "embed-kg",
          "fuse", "train", "evaluate", "bias-check", "matrix"};
}

fs::path run_stage(Pipeline& p, std::string_view sub) {
  if (sub == "ingest") return p.ingest();
  if (sub == "analyze") return p.analyze();
  if (sub == "link") return p.link();
  if (sub == "walk") return p.walk();
  if (sub == "embed-text") return p.embed_text();
  if (sub == "embed-kg") return p.embed_kg();
  if (sub == "fuse") return p.fuse();
  if (sub == "train") return p.train();
  if (sub == "evaluate") return p.evaluate();
  if (sub == "bias-check") return p.bias_check();
  if (sub == "matrix") return p.matrix();
  throw Error(ErrorCode::InvalidConfig, "unknown subcommand " + std::string(sub));
}

}  // namespace cbe::pipeline
