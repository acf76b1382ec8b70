// End-to-end orchestration of the three-stage pipeline from a single JSON
// config: pretrain + diagnose, bias-transform (per variant), rejection-
// sample, then evaluate train-on-synthetic / test-on-real. Reports are
// deterministic in the config and seed; the manifest records artifact
// hashes and timings.
#pragma once

#include <chrono>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "btgan/adult_mimic.hpp"
#include "btgan/bias_injection.hpp"
#include "btgan/dataset.hpp"
#include "btgan/drs.hpp"
#include "btgan/metrics.hpp"
#include "btgan/mine.hpp"
#include "btgan/representation.hpp"
#include "btgan/triple_gan.hpp"

namespace btgan {

inline constexpr const char* kVersion = "0.1.0";
inline constexpr int kReportVersion = 1;

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Variant { baseline_alpha0, btgan_minus, btgan_full };

inline std::string to_string(Variant v) {
  switch (v) {
    case Variant::baseline_alpha0: return "baseline_alpha0";
    case Variant::btgan_minus: return "btgan_minus";
    case Variant::btgan_full: return "btgan_full";
  }
  return "?";
}

inline Variant variant_from_string(const std::string& s) {
  if (s == "baseline_alpha0") return Variant::baseline_alpha0;
  if (s == "btgan_minus") return Variant::btgan_minus;
  if (s == "btgan_full") return Variant::btgan_full;
  throw ConfigError("unknown variant '" + s + "'");
}

enum class DatasetSourceKind { csv, bias_injection, adult_mimic };

struct DatasetSource {
  DatasetSourceKind kind = DatasetSourceKind::bias_injection;
  // csv
  std::string path;
  std::optional<TableSchema> schema;
  double mask_fraction = 0.0;
  // bias_injection
  BiasInjectionSpec bias_spec;
  // adult_mimic
  long n_rows = 48842;
  // common
  double train_fraction = 0.85;
};

struct LdssConfig {
  std::size_t window = 5;
  double temperature = 0.5;
};

struct PipelineConfig {
  std::uint64_t seed = 0;
  Variant variant = Variant::btgan_full;
  std::string output_dir = "out";
  DatasetSource dataset;
  std::vector<SubgroupSpec> subgroups;
  TrainingConfig training;
  MineConfig mine;
  DrsConfig drs;
  LdssConfig ldss;
  DownstreamModelSpec downstream;
  long n_synth = 0;  // 0 -> training-set size
  std::optional<BundleSpecs> spec_overrides;
  nlohmann::json raw;  // canonical parsed config, hashed into the manifest

  void validate() const {
    if ((variant == Variant::btgan_minus || variant == Variant::btgan_full) &&
        mine.alpha_fairness <= 0.0)
      throw ConfigError(to_string(variant) + " requires alpha_fairness > 0");
    if (dataset.kind == DatasetSourceKind::csv && dataset.path.empty())
      throw ConfigError("csv dataset source needs a path");
    if (dataset.train_fraction <= 0.0 || dataset.train_fraction >= 1.0)
      throw ConfigError("train_fraction must lie in (0,1)");
    drs.validate();
  }
};

namespace pipeline_detail {

inline SubgroupSpec subgroup_from_json(const nlohmann::json& j) {
  SubgroupSpec s;
  s.id = j.at("id").get<std::string>();
  s.label = j.value("label", s.id);
  if (!j.contains("conditions") || j["conditions"].empty())
    throw ConfigError("subgroup '" + s.id + "' needs at least one condition");
  for (const auto& jc : j["conditions"]) {
    SubgroupCondition c;
    c.column = jc.at("column").get<std::string>();
    if (jc.contains("equals")) c.equals = jc["equals"].get<std::string>();
    if (jc.contains("range")) {
      const auto r = jc["range"].get<std::vector<double>>();
      if (r.size() != 2) throw ConfigError("range condition needs [lo, hi]");
      c.range = std::make_pair(r[0], r[1]);
    }
    s.conditions.push_back(std::move(c));
  }
  return s;
}

inline nlohmann::json subgroup_to_json(const SubgroupSpec& s) {
  nlohmann::json out{{"id", s.id}, {"label", s.label}};
  for (const auto& c : s.conditions) {
    nlohmann::json jc{{"column", c.column}};
    if (c.equals) jc["equals"] = *c.equals;
    if (c.range) jc["range"] = std::vector<double>{c.range->first, c.range->second};
    out["conditions"].push_back(jc);
  }
  return out;
}

inline DownstreamModelSpec downstream_from_json(const nlohmann::json& j) {
  DownstreamModelSpec s;
  const std::string kind = j.value("kind", std::string("linear_classifier"));
  if (kind == "linear_classifier")
    s.kind = DownstreamKind::linear_classifier;
  else if (kind == "tree_ensemble")
    s.kind = DownstreamKind::tree_ensemble;
  else
    throw ConfigError("unknown downstream kind '" + kind + "'");
  s.l2 = j.value("l2", s.l2);
  s.iterations = j.value("iterations", s.iterations);
  s.learning_rate = j.value("learning_rate", s.learning_rate);
  s.n_trees = j.value("n_trees", s.n_trees);
  s.max_depth = j.value("max_depth", s.max_depth);
  s.min_leaf = j.value("min_leaf", s.min_leaf);
  s.seed = j.value("seed", s.seed);
  return s;
}

inline BiasInjectionSpec bias_spec_from_json(const nlohmann::json& j) {
  BiasInjectionSpec s;
  s.n_rows = j.value("n_rows", s.n_rows);
  s.correlation_strength = j.value("correlation_strength", s.correlation_strength);
  s.minority_fraction = j.value("minority_fraction", s.minority_fraction);
  s.proxy_agreement = j.value("proxy_agreement", s.proxy_agreement);
  s.label_missing_fraction = j.value("label_missing_fraction", s.label_missing_fraction);
  s.seed = j.value("seed", s.seed);
  if (j.contains("base_distribution")) {
    s.base_distribution.clear();
    for (const auto& jc : j["base_distribution"])
      s.base_distribution.push_back(
          {jc.value("weight", 1.0), jc.value("mean", 0.0), jc.value("spread", 1.0)});
  }
  return s;
}

inline std::uint64_t file_hash(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot hash missing file: " + path);
  std::uint64_t h = 0xcbf29ce484222325ULL;
  char buf[65536];
  while (in.read(buf, sizeof buf) || in.gcount() > 0) {
    for (std::streamsize i = 0; i < in.gcount(); ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 0x100000001b3ULL;
    }
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

}  // namespace pipeline_detail

inline PipelineConfig parse_pipeline_config(const nlohmann::json& j) {
  PipelineConfig cfg;
  cfg.raw = j;
  try {
    cfg.seed = j.value("seed", 0ULL);
    cfg.variant = variant_from_string(j.value("variant", std::string("btgan_full")));
    cfg.output_dir = j.value("output_dir", std::string("out"));

    const auto& jd = j.at("dataset");
    const std::string kind = jd.value("type", std::string("bias_injection"));
    if (kind == "csv") {
      cfg.dataset.kind = DatasetSourceKind::csv;
      cfg.dataset.path = jd.value("path", std::string());
      if (jd.contains("schema"))
        cfg.dataset.schema = TableSchema::from_json(jd["schema"]);
      else if (jd.contains("schema_path")) {
        std::ifstream in(jd["schema_path"].get<std::string>());
        if (!in) throw ConfigError("cannot open schema file");
        nlohmann::json js;
        in >> js;
        cfg.dataset.schema = TableSchema::from_json(js);
      } else {
        throw ConfigError("csv dataset needs 'schema' or 'schema_path'");
      }
      cfg.dataset.mask_fraction = jd.value("mask_fraction", 0.0);
    } else if (kind == "bias_injection") {
      cfg.dataset.kind = DatasetSourceKind::bias_injection;
      cfg.dataset.bias_spec = pipeline_detail::bias_spec_from_json(jd);
      if (!jd.contains("seed")) cfg.dataset.bias_spec.seed = substream_seed(cfg.seed, "data");
    } else if (kind == "adult_mimic") {
      cfg.dataset.kind = DatasetSourceKind::adult_mimic;
      cfg.dataset.n_rows = jd.value("n_rows", 48842L);
    } else {
      throw ConfigError("unknown dataset type '" + kind + "'");
    }
    cfg.dataset.train_fraction = jd.value("train_fraction", 0.85);

    if (j.contains("subgroups"))
      for (const auto& js : j["subgroups"]) cfg.subgroups.push_back(pipeline_detail::subgroup_from_json(js));

    if (j.contains("training")) cfg.training = TrainingConfig::from_json(j["training"]);
    cfg.training.seed = substream_seed(cfg.seed, "training");
    if (j.contains("mine")) cfg.mine = MineConfig::from_json(j["mine"]);
    if (j.contains("drs")) {
      const auto& jr = j["drs"];
      cfg.drs.l_constant_percentile = jr.value("l_constant_percentile", cfg.drs.l_constant_percentile);
      cfg.drs.burn_in = jr.value("burn_in", cfg.drs.burn_in);
      cfg.drs.gamma_shift = jr.value("gamma_shift", cfg.drs.gamma_shift);
      cfg.drs.max_attempts_factor = jr.value("max_attempts_factor", cfg.drs.max_attempts_factor);
    }
    if (j.contains("ldss")) {
      cfg.ldss.window = j["ldss"].value("window", cfg.ldss.window);
      cfg.ldss.temperature = j["ldss"].value("temperature", cfg.ldss.temperature);
    }
    if (j.contains("downstream")) cfg.downstream = pipeline_detail::downstream_from_json(j["downstream"]);
    cfg.n_synth = j.value("n_synth", 0L);
    if (j.contains("specs")) {
      BundleSpecs specs;  // filled against the schema later if defaulted
      const auto& js = j["specs"];
      specs.classifier = js.contains("classifier") ? network_spec_from_json(js["classifier"]) : NetworkSpec{};
      specs.generator = js.contains("generator") ? network_spec_from_json(js["generator"]) : NetworkSpec{};
      specs.discriminator =
          js.contains("discriminator") ? network_spec_from_json(js["discriminator"]) : NetworkSpec{};
      cfg.spec_overrides = specs;
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config parse error: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

inline PipelineConfig load_pipeline_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("invalid config JSON: ") + e.what());
  }
  return parse_pipeline_config(j);
}

inline std::uint64_t config_hash(const PipelineConfig& cfg) { return fnv1a64(cfg.raw.dump()); }

struct ResolvedData {
  Dataset train;
  Dataset test;
  std::optional<BiasGroundTruth> bias_truth;
};

inline ResolvedData resolve_dataset(const PipelineConfig& cfg) {
  switch (cfg.dataset.kind) {
    case DatasetSourceKind::csv: {
      auto d = load_csv(cfg.dataset.path, *cfg.dataset.schema, SplitTag::train);
      auto [train, test] = stratified_split(d, cfg.dataset.train_fraction, substream_seed(cfg.seed, "split"));
      if (cfg.dataset.mask_fraction > 0.0)
        train = mask_labels(train, cfg.dataset.mask_fraction, substream_seed(cfg.seed, "mask"));
      return {std::move(train), std::move(test), std::nullopt};
    }
    case DatasetSourceKind::bias_injection: {
      auto out = synthesize_biased(cfg.dataset.bias_spec);
      auto [train, test] =
          stratified_split(out.data, cfg.dataset.train_fraction, substream_seed(cfg.seed, "split"));
      return {std::move(train), std::move(test), out.truth};
    }
    case DatasetSourceKind::adult_mimic: {
      auto out = synthesize_adult_mimic(cfg.dataset.n_rows, substream_seed(cfg.seed, "data"));
      auto [train, test] =
          stratified_split(out.data, cfg.dataset.train_fraction, substream_seed(cfg.seed, "split"));
      return {std::move(train), std::move(test), std::nullopt};
    }
  }
  throw ConfigError("unreachable dataset kind");
}

// ---- evaluation report ----

struct TaskMetrics {
  double accuracy = 0.0, f1 = 0.0, auroc = 0.0, auprc = 0.0;
  double parity_gap = 0.0;
  std::optional<double> auroc_gap;
  double precision_pos = 0.0, recall_pos = 0.0;
};

struct FairnessReport {
  TaskMetrics synthetic_model;  // trained on synthetic, tested on real test
  TaskMetrics real_model;       // trained on real train, tested on real test
  double data_leakage = 0.0;
  double model_leakage = 0.0;
  double delta_amplification = 0.0;
  double jsd = 0.0;
  DiscriminativeScore discriminative;
  ParityMiOracle parity_mi;      // on synthetic (Y', S')
  double mi_estimate_nats = 0.0; // clamped at 0 for reporting
  bool mi_converged = false;
  DpDgpAudit representation;
  double drs_acceptance_rate = 0.0;
  double drs_l_constant = 0.0;

  nlohmann::json to_json() const {
    auto task = [](const TaskMetrics& t) {
      nlohmann::json j{{"accuracy", t.accuracy}, {"f1", t.f1},        {"auroc", t.auroc},
                       {"auprc", t.auprc},       {"parity_gap", t.parity_gap},
                       {"precision", t.precision_pos},               {"recall", t.recall_pos}};
      if (t.auroc_gap)
        j["auroc_gap"] = *t.auroc_gap;
      else
        j["auroc_gap"] = nullptr;
      return j;
    };
    nlohmann::json rep;
    for (const auto& r : representation.records) {
      rep["subgroups"].push_back(nlohmann::json{{"id", r.id},
                                                {"p_real", r.p_real},
                                                {"p_synth", r.p_synth},
                                                {"lds", r.lds_value},
                                                {"band", to_string(r.band)},
                                                {"auditable", r.auditable}});
    }
    rep["verdict"] = representation.verdict;
    rep["delta"] = representation.delta;
    rep["band_proportions"] = representation.band_proportions;
    return nlohmann::json{
        {"report_version", kReportVersion},
        {"synthetic_model", task(synthetic_model)},
        {"real_model", task(real_model)},
        {"leakage",
         {{"data", data_leakage}, {"model", model_leakage}, {"delta", delta_amplification}}},
        {"distribution",
         {{"jsd", jsd},
          {"discriminative_score", discriminative.score},
          {"discriminative_accuracy", discriminative.raw_accuracy}}},
        {"parity_mi",
         {{"parity_holds", parity_mi.parity_holds}, {"plug_in_mi", parity_mi.plug_in_mi}}},
        {"mi", {{"estimate_nats", mi_estimate_nats}, {"converged", mi_converged}}},
        {"representation", rep},
        {"drs", {{"acceptance_rate", drs_acceptance_rate}, {"l_constant", drs_l_constant}}}};
  }
};

namespace pipeline_detail {

inline TaskMetrics evaluate_task(const DownstreamModel& model, const Dataset& test, int sensitive_col) {
  TaskMetrics out;
  const Matrix x = test.features();
  const auto truth = test.labels();
  const auto pred = model.predict(x);
  const Vector scores = model.scores(x);
  out.accuracy = accuracy(pred, truth);
  out.f1 = f1_score(pred, truth);
  out.auroc = auroc(scores, truth);
  out.auprc = auprc(scores, truth);
  const auto c = confusion(pred, truth);
  out.precision_pos = precision(c);
  out.recall_pos = recall(c);
  const auto groups = test.sensitive_groups(sensitive_col);
  out.parity_gap = parity_gap(pred, groups, 0, 1);
  out.auroc_gap = auroc_gap(scores, truth, groups, 0, 1);
  return out;
}

}  // namespace pipeline_detail

// Builds the full evaluation report from (real train, real test, synthetic).
inline FairnessReport evaluate_fairness(const Dataset& train, const Dataset& test,
                                        const Dataset& synthetic, const DownstreamModelSpec& downstream,
                                        const MineConfig& mine_cfg, std::uint64_t seed) {
  const auto sens_cols = train.schema().sensitive_columns();
  if (sens_cols.empty()) throw ConfigError("evaluation needs at least one sensitive column");
  const int sens_col = sens_cols.front();

  FairnessReport rep;

  DownstreamModelSpec spec = downstream;
  spec.seed = substream_seed(seed, "downstream-synth");
  const auto synth_model = DownstreamModel::train(synthetic.features(), synthetic.labels(), spec);
  rep.synthetic_model = pipeline_detail::evaluate_task(synth_model, test, sens_col);

  spec.seed = substream_seed(seed, "downstream-real");
  const auto real_model = DownstreamModel::train(train.features(), train.labels(), spec);
  rep.real_model = pipeline_detail::evaluate_task(real_model, test, sens_col);

  // leakage on the synthetic sample: labels and model predictions vs S'
  const auto synth_sens = synthetic.sensitive_groups(sens_col);
  const auto synth_labels = synthetic.labels();
  rep.data_leakage = leakage(synth_labels, synth_sens, 0.25, substream_seed(seed, "leak-data"));
  const auto synth_pred = synth_model.predict(synthetic.features());
  rep.model_leakage = leakage(synth_pred, synth_sens, 0.25, substream_seed(seed, "leak-model"));
  rep.delta_amplification = rep.model_leakage - rep.data_leakage;

  rep.jsd = jsd_marginal(train, synthetic.encoded());
  rep.discriminative = discriminative_score(train.encoded(), synthetic.encoded(),
                                            substream_seed(seed, "disc-score"));
  rep.parity_mi = parity_mi_oracle(synth_labels, synth_sens);

  // MI between W and S on the synthetic sample (discrete encoded view)
  {
    const auto v = mine_views(synthetic.schema(), synthetic.features(),
                              one_hot(synth_labels, synthetic.schema().label_cardinality()));
    MineConfig probe = mine_cfg;
    const auto est = mine_estimate(v.w, v.s, probe, substream_seed(seed, "mi-report"));
    rep.mi_estimate_nats = std::max(0.0, est.value_nats);
    rep.mi_converged = est.converged;
  }
  return rep;
}

struct RunManifest {
  std::string config_hash_hex;
  std::string output_dir;
  std::map<std::string, std::string> artifacts;       // name -> path
  std::map<std::string, std::string> artifact_hashes; // name -> fnv1a64 hex
  std::map<std::string, double> stage_seconds;
  std::string version = kVersion;

  nlohmann::json to_json() const {
    return nlohmann::json{{"config_hash", config_hash_hex},
                          {"output_dir", output_dir},
                          {"artifacts", artifacts},
                          {"artifact_hashes", artifact_hashes},
                          {"stage_seconds", stage_seconds},
                          {"version", version}};
  }
};

namespace pipeline_detail {

class StageTimer {
 public:
  explicit StageTimer(RunManifest* manifest, std::string name)
      : manifest_(manifest), name_(std::move(name)), start_(std::chrono::steady_clock::now()) {}
  ~StageTimer() {
    const auto end = std::chrono::steady_clock::now();
    manifest_->stage_seconds[name_] =
        std::chrono::duration_cast<std::chrono::duration<double>>(end - start_).count();
  }

 private:
  RunManifest* manifest_;
  std::string name_;
  std::chrono::steady_clock::time_point start_;
};

inline void register_artifact(RunManifest& m, const std::string& name, const std::string& path) {
  m.artifacts[name] = path;
  m.artifact_hashes[name] = hex64(file_hash(path));
}

inline void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write file: " + path);
  out << text;
}

// Flat tabular export mirroring the benchmark tables: one metric per row.
inline std::string report_table_csv(const FairnessReport& r, Variant variant) {
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(6);
  os << "metric,model,value\n";
  auto task = [&](const char* name, const TaskMetrics& t) {
    os << "accuracy," << name << "," << t.accuracy << "\n";
    os << "f1," << name << "," << t.f1 << "\n";
    os << "auroc," << name << "," << t.auroc << "\n";
    os << "auprc," << name << "," << t.auprc << "\n";
    os << "precision," << name << "," << t.precision_pos << "\n";
    os << "recall," << name << "," << t.recall_pos << "\n";
    os << "parity_gap," << name << "," << t.parity_gap << "\n";
    if (t.auroc_gap) os << "auroc_gap," << name << "," << *t.auroc_gap << "\n";
  };
  const std::string vname = to_string(variant);
  task(vname.c_str(), r.synthetic_model);
  task("real_data", r.real_model);
  os << "data_leakage," << vname << "," << r.data_leakage << "\n";
  os << "model_leakage," << vname << "," << r.model_leakage << "\n";
  os << "delta_amplification," << vname << "," << r.delta_amplification << "\n";
  os << "jsd," << vname << "," << r.jsd << "\n";
  os << "discriminative_score," << vname << "," << r.discriminative.score << "\n";
  os << "mi_estimate_nats," << vname << "," << r.mi_estimate_nats << "\n";
  return os.str();
}

}  // namespace pipeline_detail

// Synthetic sample as a Dataset sharing the real schema and scales.
inline Dataset synthetic_dataset(const ModelBundle& bundle, const Dataset& like,
                                 const GeneratedBatch& batch) {
  Matrix full = bundle.discretize(batch);
  return Dataset(like.schema(), std::move(full),
                 std::vector<std::uint8_t>(static_cast<std::size_t>(batch.rows()), 1), SplitTag::train,
                 like.scales());
}

struct PipelineOutcome {
  RunManifest manifest;
  FairnessReport report;
  ModelBundle bundle;
  Dataset synthetic;
};

// Runs stages 1-3 and the evaluation for one variant. All artifacts land in
// cfg.output_dir; the returned outcome carries the in-memory results for
// callers that keep going (sweeps, tests).
inline PipelineOutcome run_pipeline(const PipelineConfig& cfg) {
  cfg.validate();
  namespace fs = std::filesystem;
  fs::create_directories(cfg.output_dir);

  RunManifest manifest;
  manifest.config_hash_hex = pipeline_detail::hex64(config_hash(cfg));
  manifest.output_dir = cfg.output_dir;

  ResolvedData data = resolve_dataset(cfg);
  SubgroupEvaluator monitor(data.train.schema(), data.train.scales(), cfg.subgroups);

  // effective stage-2 settings per variant
  MineConfig mine_cfg = cfg.mine;
  if (cfg.variant == Variant::baseline_alpha0) mine_cfg.alpha_fairness = 0.0;
  const bool use_ldss = cfg.variant == Variant::btgan_full;

  ModelBundle bundle = cfg.spec_overrides
                           ? init_models(data.train.schema(), *cfg.spec_overrides, cfg.training)
                           : init_models(data.train.schema(), cfg.training);

  {
    pipeline_detail::StageTimer timer(&manifest, "stage1_pretrain");
    train_stage1(data.train, bundle, cfg.training, cfg.subgroups.empty() ? nullptr : &monitor);
  }
  const std::string ckpt1 = cfg.output_dir + "/stage1.ckpt";
  save_checkpoint(bundle, ckpt1);
  pipeline_detail::register_artifact(manifest, "stage1_checkpoint", ckpt1);

  {
    pipeline_detail::StageTimer timer(&manifest, "stage2_transform");
    const SamplerProvider sampler =
        use_ldss && !cfg.subgroups.empty()
            ? ldss_sampler(monitor, cfg.ldss.window, cfg.ldss.temperature)
            : uniform_sampler();
    train_stage2(data.train, bundle, mine_cfg, sampler, cfg.training,
                 cfg.subgroups.empty() ? nullptr : &monitor);
  }
  const std::string ckpt2 = cfg.output_dir + "/stage2.ckpt";
  save_checkpoint(bundle, ckpt2);
  pipeline_detail::register_artifact(manifest, "stage2_checkpoint", ckpt2);

  const long n_synth = cfg.n_synth > 0 ? cfg.n_synth : data.train.n_rows();
  DrsResult drs;
  {
    pipeline_detail::StageTimer timer(&manifest, "stage3_drs");
    drs = drs_filter(bundle, n_synth, cfg.drs, substream_seed(cfg.seed, "drs"));
  }
  Dataset synthetic = synthetic_dataset(bundle, data.train, drs.batch);
  const std::string synth_path = cfg.output_dir + "/synthetic.csv";
  write_csv(synth_path, synthetic.schema(), decode(synthetic, synthetic.encoded()));
  pipeline_detail::register_artifact(manifest, "synthetic_csv", synth_path);

  FairnessReport report;
  {
    pipeline_detail::StageTimer timer(&manifest, "evaluate");
    report = evaluate_fairness(data.train, data.test, synthetic, cfg.downstream, cfg.mine,
                               substream_seed(cfg.seed, "evaluate"));
    report.drs_acceptance_rate = drs.acceptance_rate;
    report.drs_l_constant = drs.l_constant;
    if (!cfg.subgroups.empty())
      report.representation = audit_dp_dgp(monitor, data.train.encoded(), synthetic.encoded());
  }

  const std::string report_path = cfg.output_dir + "/report.json";
  pipeline_detail::write_text(report_path, report.to_json().dump(2) + "\n");
  pipeline_detail::register_artifact(manifest, "report_json", report_path);

  const std::string table_path = cfg.output_dir + "/tables.csv";
  pipeline_detail::write_text(table_path, pipeline_detail::report_table_csv(report, cfg.variant));
  pipeline_detail::register_artifact(manifest, "tables_csv", table_path);

  const std::string manifest_path = cfg.output_dir + "/manifest.json";
  pipeline_detail::write_text(manifest_path, manifest.to_json().dump(2) + "\n");

  PipelineOutcome out{std::move(manifest), std::move(report), std::move(bundle), std::move(synthetic)};
  return out;
}

struct AlphaSweepRow {
  double alpha = 0.0;
  double train_accuracy = 0.0;  // synthetic-trained model on its own training sample
  double test_accuracy = 0.0;   // synthetic-trained model on the real test split
  double mi_estimate = 0.0;
  double parity_gap = 0.0;
};

struct AlphaSweepReport {
  std::vector<AlphaSweepRow> rows;

  nlohmann::json to_json() const {
    nlohmann::json out = nlohmann::json::array();
    for (const auto& r : rows)
      out.push_back(nlohmann::json{{"alpha", r.alpha},
                                   {"train_accuracy", r.train_accuracy},
                                   {"test_accuracy", r.test_accuracy},
                                   {"mi_estimate", r.mi_estimate},
                                   {"parity_gap", r.parity_gap}});
    return nlohmann::json{{"report_version", kReportVersion}, {"sweep", out}};
  }

  std::string to_csv() const {
    std::ostringstream os;
    os.setf(std::ios::fixed);
    os.precision(6);
    os << "alpha,train_accuracy,test_accuracy,mi_estimate,parity_gap\n";
    for (const auto& r : rows)
      os << r.alpha << "," << r.train_accuracy << "," << r.test_accuracy << "," << r.mi_estimate << ","
         << r.parity_gap << "\n";
    return os.str();
  }
};

// Ablation over alpha: one shared stage-1 pretrain, then per-alpha transform,
// rejection sampling and a compact evaluation.
inline AlphaSweepReport run_alpha_sweep(const PipelineConfig& cfg, const std::vector<double>& alphas) {
  if (alphas.size() < 2) throw ConfigError("alpha sweep needs at least 2 alphas");
  namespace fs = std::filesystem;
  fs::create_directories(cfg.output_dir);

  ResolvedData data = resolve_dataset(cfg);
  SubgroupEvaluator monitor(data.train.schema(), data.train.scales(), cfg.subgroups);

  ModelBundle pretrained = cfg.spec_overrides
                               ? init_models(data.train.schema(), *cfg.spec_overrides, cfg.training)
                               : init_models(data.train.schema(), cfg.training);
  train_stage1(data.train, pretrained, cfg.training, cfg.subgroups.empty() ? nullptr : &monitor);

  const auto sens_cols = data.train.schema().sensitive_columns();
  if (sens_cols.empty()) throw ConfigError("alpha sweep needs a sensitive column");
  const int sens_col = sens_cols.front();

  AlphaSweepReport report;
  for (double alpha : alphas) {
    ModelBundle bundle = pretrained;
    MineConfig mc = cfg.mine;
    mc.alpha_fairness = alpha;
    const SamplerProvider sampler =
        cfg.variant == Variant::btgan_full && !cfg.subgroups.empty()
            ? ldss_sampler(monitor, cfg.ldss.window, cfg.ldss.temperature)
            : uniform_sampler();
    train_stage2(data.train, bundle, mc, sampler, cfg.training,
                 cfg.subgroups.empty() ? nullptr : &monitor);

    const long n_synth = cfg.n_synth > 0 ? cfg.n_synth : data.train.n_rows();
    const auto drs = drs_filter(bundle, n_synth, cfg.drs, substream_seed(cfg.seed, "drs"));
    const Dataset synthetic = synthetic_dataset(bundle, data.train, drs.batch);

    DownstreamModelSpec spec = cfg.downstream;
    spec.seed = substream_seed(cfg.seed, "sweep-downstream");
    const auto model = DownstreamModel::train(synthetic.features(), synthetic.labels(), spec);

    AlphaSweepRow row;
    row.alpha = alpha;
    row.train_accuracy = accuracy(model.predict(synthetic.features()), synthetic.labels());
    row.test_accuracy = accuracy(model.predict(data.test.features()), data.test.labels());
    row.parity_gap =
        parity_gap(model.predict(data.test.features()), data.test.sensitive_groups(sens_col), 0, 1);
    const auto mi = bundle_mi_estimate(bundle, std::min<long>(8192, 2 * n_synth), cfg.mine,
                                       substream_seed(cfg.seed, "sweep-mi"));
    row.mi_estimate = std::max(0.0, mi.value_nats);
    report.rows.push_back(row);
  }

  pipeline_detail::write_text(cfg.output_dir + "/sweep.json", report.to_json().dump(2) + "\n");
  pipeline_detail::write_text(cfg.output_dir + "/sweep.csv", report.to_csv());
  return report;
}

}  // namespace btgan
