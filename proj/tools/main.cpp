#include <algorithm>
#include <array>
#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "proulearn/adapt.hpp"
#include "proulearn/bench.hpp"
#include "proulearn/correlation.hpp"
#include "proulearn/errors.hpp"
#include "proulearn/hpe.hpp"
#include "proulearn/io.hpp"
#include "proulearn/net.hpp"
#include "proulearn/numeric.hpp"
#include "proulearn/pseudolabel.hpp"
#include "proulearn/random.hpp"
#include "proulearn/selection.hpp"
#include "proulearn/synth.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using ojson = nlohmann::ordered_json;
using namespace proulearn;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitArgs = 2;
constexpr int kExitIo = 3;
constexpr int kExitDivergence = 4;

// Shortest round-trip decimal form, locale-independent, so rerunning a
// command reproduces byte-identical CSV output.
std::string fmt(double v) {
  std::array<char, 32> buf;
  const auto res = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), res.ptr);
}

void emit(const ojson& line) { std::cout << line.dump() << '\n'; }

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw io_error("cannot open output file: " + path.string());
  return out;
}

void finish_out(std::ofstream& out, const fs::path& path) {
  out.flush();
  if (!out) throw io_error("error writing output file: " + path.string());
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out = open_out(path);
  out << text;
  finish_out(out, path);
}

json load_config_json(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw io_error("cannot open config file: " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw std::invalid_argument("config file is not valid JSON: " + std::string(e.what()));
  }
}

// Flag precedence: a flag given on the command line wins over the config
// file, which wins over the built-in default already sitting in `value`.
// Config keys are the long flag names with dashes turned to underscores.
template <typename T>
void overlay(const CLI::App& sub, const json& cfg, const std::string& flag, T& value) {
  if (!cfg.is_object()) return;
  if (sub.count("--" + flag) > 0) return;
  std::string key = flag;
  std::replace(key.begin(), key.end(), '-', '_');
  const auto it = cfg.find(key);
  if (it == cfg.end()) return;
  try {
    value = it->get<T>();
  } catch (const json::exception& e) {
    throw std::invalid_argument("config key '" + key + "': " + e.what());
  }
}

FileFormat parse_format(const std::string& name) {
  if (name == "binary") return FileFormat::binary;
  if (name == "csv") return FileFormat::csv;
  throw std::invalid_argument("unknown format '" + name + "'; valid: binary, csv");
}

SimilarityMetric parse_metric(const std::string& name) {
  if (name == "correlation") return SimilarityMetric::correlation;
  if (name == "cosine") return SimilarityMetric::cosine;
  if (name == "euclidean") return SimilarityMetric::euclidean;
  throw std::invalid_argument("unknown metric '" + name +
                              "'; valid: correlation, cosine, euclidean");
}

MmdKernel parse_kernel(const std::string& name) {
  if (name == "linear") return MmdKernel::linear;
  if (name == "rbf") return MmdKernel::rbf;
  throw std::invalid_argument("unknown kernel '" + name + "'; valid: linear, rbf");
}

// Flags shared by every subcommand.
struct CommonFlags {
  std::uint64_t seed = 0;
  std::string config_path;
  std::size_t jobs = 1;
  std::string format = "binary";
  bool csv_header = false;
};

void add_common(CLI::App* sub, CommonFlags& c) {
  sub->add_option("--seed", c.seed, "master seed; every stage derives its own stream");
  sub->add_option("--config", c.config_path,
                  "JSON file overlaying flag defaults (explicit flags win)");
  sub->add_option("--jobs", c.jobs, "worker threads (bench only)");
  sub->add_option("--format", c.format, "feature file format")
      ->check(CLI::IsMember({"binary", "csv"}));
  sub->add_flag("--csv-header", c.csv_header, "CSV feature files carry one header line");
}

json resolve_config(const CLI::App& sub, const CommonFlags& c) {
  json cfg;
  if (sub.count("--config") > 0) cfg = load_config_json(c.config_path);
  return cfg;
}

void overlay_common(const CLI::App& sub, const json& cfg, CommonFlags& c) {
  overlay(sub, cfg, "seed", c.seed);
  overlay(sub, cfg, "jobs", c.jobs);
  overlay(sub, cfg, "format", c.format);
  overlay(sub, cfg, "csv-header", c.csv_header);
}

// Synthetic-benchmark geometry, shared by synth-gen and bench. Resolution
// order: inline flags > --spec file > --config > built-in defaults.
struct SynthFlags {
  std::string spec_path;
  SynthSpec spec;
};

void add_synth_flags(CLI::App* sub, SynthFlags& sf) {
  sub->add_option("--spec", sf.spec_path, "JSON file with generator fields (flags win)");
  sub->add_option("--classes", sf.spec.num_classes, "class count");
  sub->add_option("--dim", sf.spec.d_in, "input dimension");
  sub->add_option("--source-per-class", sf.spec.source_per_class, "source samples per class");
  sub->add_option("--target-per-class", sf.spec.target_per_class, "target samples per class");
  sub->add_option("--rotation", sf.spec.rotation_deg, "rotation of the class plane, degrees");
  sub->add_option("--translation", sf.spec.translation, "shift along the first class direction");
  sub->add_option("--scale", sf.spec.scale, "per-dimension scale factors")->delimiter(',');
  sub->add_option("--scale-lo", sf.spec.scale_lo, "ramp start when --scale is absent");
  sub->add_option("--scale-hi", sf.spec.scale_hi, "ramp end when --scale is absent");
  sub->add_option("--noise", sf.spec.noise_sigma, "per-class Gaussian noise sigma");
  sub->add_option("--outliers", sf.spec.outlier_fraction, "outlier fraction of the target");
}

void overlay_synth(const CLI::App& sub, const json& cfg, SynthSpec& spec) {
  overlay(sub, cfg, "classes", spec.num_classes);
  overlay(sub, cfg, "dim", spec.d_in);
  overlay(sub, cfg, "source-per-class", spec.source_per_class);
  overlay(sub, cfg, "target-per-class", spec.target_per_class);
  overlay(sub, cfg, "rotation", spec.rotation_deg);
  overlay(sub, cfg, "translation", spec.translation);
  overlay(sub, cfg, "scale", spec.scale);
  overlay(sub, cfg, "scale-lo", spec.scale_lo);
  overlay(sub, cfg, "scale-hi", spec.scale_hi);
  overlay(sub, cfg, "noise", spec.noise_sigma);
  overlay(sub, cfg, "outliers", spec.outlier_fraction);
}

SynthSpec resolve_synth(const CLI::App& sub, const json& cfg, const SynthFlags& sf,
                        std::uint64_t seed) {
  SynthSpec spec = sf.spec;  // flags already parsed into place
  // Apply the weaker source first so the spec file overrides the config.
  overlay_synth(sub, cfg, spec);
  if (sub.count("--spec") > 0) {
    const json file = load_config_json(sf.spec_path);
    if (!file.is_object())
      throw std::invalid_argument("spec file must hold a JSON object: " + sf.spec_path);
    overlay_synth(sub, file, spec);
    if (sub.count("--seed") == 0 && file.contains("seed")) {
      seed = file.at("seed").get<std::uint64_t>();
    }
  }
  spec.seed = seed;
  return spec;
}

ojson synth_spec_json(const SynthSpec& spec) {
  ojson j;
  j["classes"] = spec.num_classes;
  j["dim"] = spec.d_in;
  j["source_per_class"] = spec.source_per_class;
  j["target_per_class"] = spec.target_per_class;
  j["rotation"] = spec.rotation_deg;
  j["translation"] = spec.translation;
  j["scale"] = spec.scale;
  j["scale_lo"] = spec.scale_lo;
  j["scale_hi"] = spec.scale_hi;
  j["noise"] = spec.noise_sigma;
  j["outliers"] = spec.outlier_fraction;
  j["seed"] = spec.seed;
  return j;
}

ojson active_set_json(const ActiveSet& set) {
  ojson j;
  j["budget_fraction"] = set.budget_fraction;
  j["indices"] = set.indices;
  j["labels"] = set.labels;
  j["warning"] = set.warning;
  return j;
}

ActiveSet load_active_set(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw io_error("cannot open active set file: " + path.string());
  ActiveSet set;
  try {
    const json j = json::parse(in);
    set.budget_fraction = j.at("budget_fraction").get<double>();
    set.indices = j.at("indices").get<std::vector<std::size_t>>();
    set.labels = j.at("labels").get<std::vector<std::uint32_t>>();
    if (j.contains("warning")) set.warning = j.at("warning").get<std::string>();
  } catch (const json::exception& e) {
    throw format_error(format_fault::malformed_header,
                       "active set file " + path.string() + ": " + e.what());
  }
  if (set.labels.size() != set.indices.size())
    throw format_error(format_fault::dimension_mismatch,
                       "active set file: indices and labels lengths differ");
  for (std::size_t i = 1; i < set.indices.size(); ++i)
    if (set.indices[i] <= set.indices[i - 1])
      throw format_error(format_fault::bad_value,
                         "active set file: indices must be ascending and unique");
  return set;
}

// ---- synth-gen ----

struct SynthGenArgs {
  CommonFlags common;
  SynthFlags synth;
  std::string out_dir;
};

int run_synth_gen(const CLI::App& sub, SynthGenArgs& a) {
  const json cfg = resolve_config(sub, a.common);
  overlay_common(sub, cfg, a.common);
  overlay(sub, cfg, "out-dir", a.out_dir);
  const SynthSpec spec = resolve_synth(sub, cfg, a.synth, a.common.seed);
  const FileFormat format = parse_format(a.common.format);

  const SynthData data = generate_shifted_domains(spec);

  fs::create_directories(a.out_dir);
  const fs::path dir(a.out_dir);
  const std::string ext = format == FileFormat::binary ? ".pulf" : ".csv";
  const fs::path src_x = dir / ("source_features" + ext);
  const fs::path src_y = dir / "source_labels.pull";
  const fs::path tgt_x = dir / ("target_features" + ext);
  const fs::path tgt_y = dir / "target_labels.pull";
  const fs::path mask_path = dir / "outlier_mask.pull";
  const fs::path spec_path = dir / "spec.json";

  save_features(data.source_x, src_x, format, a.common.csv_header);
  save_labels(data.source_y, src_y);
  save_features(data.target_x, tgt_x, format, a.common.csv_header);
  save_labels(data.target_y, tgt_y);
  LabelVector mask;
  mask.labels = data.target_outlier_mask;
  mask.num_classes = 2;
  save_labels(mask, mask_path);
  write_text(spec_path, synth_spec_json(spec).dump(2) + "\n");

  std::size_t outliers = 0;
  for (const auto m : data.target_outlier_mask) outliers += m;
  ojson line;
  line["event"] = "synth_gen";
  line["source_rows"] = data.source_x.rows;
  line["target_rows"] = data.target_x.rows;
  line["outliers"] = outliers;
  line["classes"] = spec.num_classes;
  line["dim"] = spec.d_in;
  line["files"] = {src_x.string(), src_y.string(), tgt_x.string(),
                   tgt_y.string(), mask_path.string(), spec_path.string()};
  emit(line);
  return kExitOk;
}

// ---- pretrain ----

struct PretrainArgs {
  CommonFlags common;
  std::string features_path;
  std::string labels_path;
  std::string out_model;
  PretrainConfig cfg;
  std::vector<std::size_t> hidden = {32};
};

int run_pretrain(const CLI::App& sub, PretrainArgs& a) {
  const json cfg = resolve_config(sub, a.common);
  overlay_common(sub, cfg, a.common);
  overlay(sub, cfg, "epochs", a.cfg.epochs);
  overlay(sub, cfg, "batch-size", a.cfg.batch_size);
  overlay(sub, cfg, "lr", a.cfg.lr);
  overlay(sub, cfg, "label-smoothing", a.cfg.label_smoothing);
  overlay(sub, cfg, "hidden", a.hidden);
  overlay(sub, cfg, "embed-dim", a.cfg.embed_dim);
  a.cfg.hidden = a.hidden;
  a.cfg.seed = a.common.seed;
  const FileFormat format = parse_format(a.common.format);

  const FeatureMatrix features = load_features(a.features_path, format, a.common.csv_header);
  const LabelVector labels = load_labels(a.labels_path);

  const NetModel model = pretrain_source(features, labels, a.cfg);
  save_model(model, a.out_model);
  const double train_accuracy = evaluate(model, features, labels);

  ojson line;
  line["event"] = "pretrain";
  line["train_accuracy"] = train_accuracy;
  line["epochs"] = a.cfg.epochs;
  line["model"] = a.out_model;
  emit(line);
  return kExitOk;
}

// ---- select ----

struct SelectArgs {
  CommonFlags common;
  std::string features_path;
  std::string model_path;
  std::string labels_path;
  std::string out_path;
  std::string dump_knn;
  std::string dump_scores;
  double budget = 0.05;
  std::size_t k = 8;
  std::size_t trees = 200;
  std::size_t subsample = 256;
  std::string metric = "correlation";
};

int run_select(const CLI::App& sub, SelectArgs& a) {
  const json cfg = resolve_config(sub, a.common);
  overlay_common(sub, cfg, a.common);
  overlay(sub, cfg, "budget", a.budget);
  overlay(sub, cfg, "k", a.k);
  overlay(sub, cfg, "trees", a.trees);
  overlay(sub, cfg, "subsample", a.subsample);
  overlay(sub, cfg, "metric", a.metric);
  const FileFormat format = parse_format(a.common.format);
  const SimilarityMetric metric = parse_metric(a.metric);

  const NetModel model = load_model(a.model_path);
  const FeatureMatrix features = load_features(a.features_path, format, a.common.csv_header);
  const LabelVector oracle = load_labels(a.labels_path);
  const std::size_t n = features.rows;
  if (oracle.labels.size() != n)
    throw std::invalid_argument("oracle labels do not match feature rows");

  const ForwardResult fr = forward(model, features);
  const ProbMatrix probs = softmax_rows(fr.logits);
  const std::size_t subsample = std::max<std::size_t>(1, std::min(a.subsample, n));
  const HpeEnsemble ensemble = build_ensemble(fr.embeddings, a.trees, subsample,
                                              derive_seed(a.common.seed, kHpeSeedStream));
  const HomogeneityScores h = homogeneity_scores(ensemble, fr.embeddings);
  const NeighborGraph graph =
      a.k == 0 ? NeighborGraph::empty(n) : knn_by_similarity(fr.embeddings, a.k, metric);
  const EntropyScores e = neighbor_entropy(graph, probs);
  const SelectionScores u = selection_scores(h, e);
  const ActiveSet set = select_active(u, graph, a.budget, oracle);

  ojson out = active_set_json(set);
  ojson meta;
  meta["trees"] = a.trees;
  meta["k"] = a.k;
  meta["subsample"] = subsample;
  meta["seed"] = a.common.seed;
  meta["metric"] = a.metric;
  meta["rows"] = n;
  meta["budget_count"] = budget_count(a.budget, n);
  out["metadata"] = meta;
  write_text(a.out_path, out.dump(2) + "\n");

  if (!a.dump_knn.empty()) {
    std::ofstream knn = open_out(a.dump_knn);
    knn << "sample,rank,neighbor,similarity\n";
    for (std::size_t i = 0; i < n; ++i) {
      const auto row = graph.row(i);
      const auto corr = graph.corr_row(i);
      for (std::size_t r = 0; r < graph.k; ++r)
        knn << i << ',' << r << ',' << row[r] << ',' << fmt(corr[r]) << '\n';
    }
    finish_out(knn, a.dump_knn);
  }
  if (!a.dump_scores.empty()) {
    std::ofstream sc = open_out(a.dump_scores);
    sc << "sample,h_raw,h_norm,e_raw,e_norm,u\n";
    for (std::size_t i = 0; i < n; ++i)
      sc << i << ',' << fmt(h.raw[i]) << ',' << fmt(h.normalized[i]) << ',' << fmt(e.raw[i])
         << ',' << fmt(e.normalized[i]) << ',' << fmt(u.u[i]) << '\n';
    finish_out(sc, a.dump_scores);
  }

  ojson line;
  line["event"] = "select";
  line["selected"] = set.indices.size();
  line["budget_fraction"] = set.budget_fraction;
  line["trees"] = a.trees;
  line["k"] = a.k;
  line["warning"] = set.warning;
  line["out"] = a.out_path;
  emit(line);
  if (!set.warning.empty()) std::cerr << "warning: " << set.warning << '\n';
  return kExitOk;
}

// ---- adapt ----

struct AdaptArgs {
  CommonFlags common;
  std::string model_path;
  std::string features_path;
  std::string labels_path;
  std::string out_model;
  std::string out_report;
  std::string out_epochs;
  std::string active_path;
  std::string dump_pseudo;
  AdaptConfig cfg;
  std::string metric = "correlation";
  bool ablate_cc = false;
  bool no_shuffle = false;
};

int run_adapt(const CLI::App& sub, AdaptArgs& a) {
  const json cfg = resolve_config(sub, a.common);
  overlay_common(sub, cfg, a.common);
  overlay(sub, cfg, "epochs", a.cfg.epochs);
  overlay(sub, cfg, "batch-size", a.cfg.batch_size);
  overlay(sub, cfg, "budget", a.cfg.budget_fraction);
  overlay(sub, cfg, "trees", a.cfg.trees);
  overlay(sub, cfg, "k", a.cfg.k_neighbors);
  overlay(sub, cfg, "subsample", a.cfg.subsample_size);
  overlay(sub, cfg, "lr", a.cfg.lr_backbone);
  overlay(sub, cfg, "metric", a.metric);
  overlay(sub, cfg, "ablate-cc", a.ablate_cc);
  overlay(sub, cfg, "refresh-hpe", a.cfg.refresh_hpe);
  overlay(sub, cfg, "freeze-classifier", a.cfg.freeze_classifier);
  overlay(sub, cfg, "no-shuffle", a.no_shuffle);
  a.cfg.seed = a.common.seed;
  a.cfg.metric = parse_metric(a.metric);
  a.cfg.mask.cc = !a.ablate_cc;
  a.cfg.shuffle = !a.no_shuffle;
  a.cfg.record_pseudo = !a.dump_pseudo.empty();
  const FileFormat format = parse_format(a.common.format);

  if (a.out_report.empty())
    a.out_report = (fs::path(a.out_model).parent_path() /
                    (fs::path(a.out_model).stem().string() + ".report.json"))
                       .string();
  if (a.out_epochs.empty())
    a.out_epochs = (fs::path(a.out_model).parent_path() /
                    (fs::path(a.out_model).stem().string() + ".epochs.csv"))
                       .string();

  const NetModel model = load_model(a.model_path);
  const FeatureMatrix target = load_features(a.features_path, format, a.common.csv_header);
  const LabelVector oracle = load_labels(a.labels_path);

  ActiveSet preselected;
  const bool have_active = !a.active_path.empty();
  if (have_active) preselected = load_active_set(a.active_path);

  ojson start;
  start["event"] = "adapt_start";
  start["epochs"] = a.cfg.epochs;
  start["budget_fraction"] = a.cfg.budget_fraction;
  start["ablate_cc"] = a.ablate_cc;
  start["preselected"] = have_active;
  emit(start);

  const AdaptResult res =
      adapt_target(model, target, oracle, a.cfg, have_active ? &preselected : nullptr);
  save_model(res.model, a.out_model);

  const AdaptReport& rep = res.report;
  ojson jr;
  jr["active"] = active_set_json(rep.active);
  jr["initial_pseudo_accuracy"] = rep.initial_pseudo_accuracy;
  jr["zero_confidence"] = rep.zero_confidence;
  jr["epochs"] = ojson::array();
  for (const auto& er : rep.epochs) {
    ojson je;
    je["epoch"] = er.epoch;
    je["l_wce"] = er.loss.wce;
    je["l_im"] = er.loss.im;
    je["l_cc"] = er.loss.cc;
    je["l_total"] = er.loss.total;
    je["pseudo_accuracy"] = er.pseudo_accuracy;
    je["target_accuracy"] = er.target_accuracy;
    je["mmd"] = er.mmd;
    jr["epochs"].push_back(je);
  }
  jr["refinements"] = ojson::array();
  for (const auto& rr : rep.refinements) {
    ojson jref;
    jref["epoch"] = rr.epoch;
    jref["pseudo_accuracy"] = rr.pseudo_accuracy;
    jref["relabeled"] = rr.relabeled;
    jr["refinements"].push_back(jref);
  }
  jr["final_target_accuracy"] = rep.final_target_accuracy;
  jr["final_mmd"] = rep.final_mmd;
  write_text(a.out_report, jr.dump(2) + "\n");

  std::ofstream csv = open_out(a.out_epochs);
  csv << "epoch,l_wce,l_im,l_cc,l_total,pseudo_acc,target_acc,mmd\n";
  for (const auto& er : rep.epochs)
    csv << er.epoch << ',' << fmt(er.loss.wce) << ',' << fmt(er.loss.im) << ','
        << fmt(er.loss.cc) << ',' << fmt(er.loss.total) << ',' << fmt(er.pseudo_accuracy)
        << ',' << fmt(er.target_accuracy) << ',' << fmt(er.mmd) << '\n';
  finish_out(csv, a.out_epochs);

  if (!a.dump_pseudo.empty()) {
    std::ofstream pcsv = open_out(a.dump_pseudo);
    pcsv << "epoch,sample_index,label,z,z_norm\n";
    for (std::size_t r = 0; r < rep.pseudo_rounds.size(); ++r) {
      const std::size_t epoch = r == 0 ? 0 : rep.refinements[r - 1].epoch;
      const PseudoLabelSet& ps = rep.pseudo_rounds[r];
      for (std::size_t j = 0; j < ps.sample_indices.size(); ++j)
        pcsv << epoch << ',' << ps.sample_indices[j] << ',' << ps.labels[j] << ','
             << fmt(ps.scores[j]) << ',' << fmt(ps.z_norm[j]) << '\n';
    }
    finish_out(pcsv, a.dump_pseudo);
  }

  for (const auto& rr : rep.refinements) {
    ojson jref;
    jref["event"] = "refinement";
    jref["epoch"] = rr.epoch;
    jref["pseudo_accuracy"] = rr.pseudo_accuracy;
    jref["relabeled"] = rr.relabeled;
    emit(jref);
  }
  ojson done;
  done["event"] = "adapt_done";
  done["final_target_accuracy"] = rep.final_target_accuracy;
  done["final_mmd"] = rep.final_mmd;
  done["initial_pseudo_accuracy"] = rep.initial_pseudo_accuracy;
  done["zero_confidence"] = rep.zero_confidence;
  done["model"] = a.out_model;
  emit(done);
  return kExitOk;
}

// ---- bench ----

struct BenchArgs {
  CommonFlags common;
  SynthFlags synth;
  std::string out_dir;
  std::vector<std::string> strategies = {"random", "entropy", "kmeans", "hpe"};
  std::size_t seeds = 10;
  bool cc_ablation = true;
  std::size_t adapt_epochs = 30;
  double lr = 1e-4;
  double budget = 0.05;
};

void overlay_nested(const json& cfg, const char* section, PretrainConfig& pc) {
  if (!cfg.is_object() || !cfg.contains(section)) return;
  const json& s = cfg.at(section);
  if (s.contains("epochs")) pc.epochs = s.at("epochs").get<std::size_t>();
  if (s.contains("batch_size")) pc.batch_size = s.at("batch_size").get<std::size_t>();
  if (s.contains("lr")) pc.lr = s.at("lr").get<double>();
  if (s.contains("label_smoothing")) pc.label_smoothing = s.at("label_smoothing").get<double>();
  if (s.contains("hidden")) pc.hidden = s.at("hidden").get<std::vector<std::size_t>>();
  if (s.contains("embed_dim")) pc.embed_dim = s.at("embed_dim").get<std::size_t>();
}

void overlay_nested(const json& cfg, const char* section, AdaptConfig& ac) {
  if (!cfg.is_object() || !cfg.contains(section)) return;
  const json& s = cfg.at(section);
  if (s.contains("epochs")) ac.epochs = s.at("epochs").get<std::size_t>();
  if (s.contains("batch_size")) ac.batch_size = s.at("batch_size").get<std::size_t>();
  if (s.contains("budget")) ac.budget_fraction = s.at("budget").get<double>();
  if (s.contains("trees")) ac.trees = s.at("trees").get<std::size_t>();
  if (s.contains("k")) ac.k_neighbors = s.at("k").get<std::size_t>();
  if (s.contains("subsample")) ac.subsample_size = s.at("subsample").get<std::size_t>();
  if (s.contains("lr")) ac.lr_backbone = s.at("lr").get<double>();
}

int run_bench(const CLI::App& sub, BenchArgs& a) {
  const json cfg = resolve_config(sub, a.common);
  overlay_common(sub, cfg, a.common);
  overlay(sub, cfg, "out-dir", a.out_dir);
  overlay(sub, cfg, "strategies", a.strategies);
  overlay(sub, cfg, "seeds", a.seeds);
  overlay(sub, cfg, "cc-ablation", a.cc_ablation);
  overlay(sub, cfg, "epochs", a.adapt_epochs);
  overlay(sub, cfg, "lr", a.lr);
  overlay(sub, cfg, "budget", a.budget);

  BenchOptions opt;
  opt.strategies.clear();
  for (const auto& name : a.strategies) {
    SelectionStrategy st;
    if (!parse_strategy(name, st))
      throw std::invalid_argument("unknown strategy '" + name +
                                  "'; valid: random, entropy, kmeans, hpe");
    opt.strategies.push_back(st);
  }
  opt.num_seeds = a.seeds;
  opt.cc_ablation = a.cc_ablation;
  opt.jobs = a.common.jobs;
  overlay_nested(cfg, "pretrain", opt.pretrain);
  overlay_nested(cfg, "adapt", opt.adapt);
  if (sub.count("--epochs") > 0 || !cfg.contains("adapt")) opt.adapt.epochs = a.adapt_epochs;
  if (sub.count("--lr") > 0) opt.adapt.lr_backbone = a.lr;
  if (sub.count("--budget") > 0) opt.adapt.budget_fraction = a.budget;

  const SynthSpec spec = resolve_synth(sub, cfg, a.synth, a.common.seed);

  ojson start;
  start["event"] = "bench_start";
  start["seeds"] = a.seeds;
  start["strategies"] = a.strategies;
  start["cc_ablation"] = a.cc_ablation;
  emit(start);

  const BenchReport rep = run_benchmark(spec, opt);

  fs::create_directories(a.out_dir);
  const fs::path dir(a.out_dir);
  const fs::path acc_path = dir / "accuracy.csv";
  const fs::path mmd_path = dir / "mmd_curves.csv";
  const fs::path report_path = dir / "report.json";

  std::ofstream acc = open_out(acc_path);
  acc << "strategy,seed,accuracy\n";
  for (const auto& st : rep.strategies)
    for (std::size_t s = 0; s < st.accuracies.size(); ++s)
      acc << strategy_name(st.strategy) << ',' << rep.seeds[s] << ',' << fmt(st.accuracies[s])
          << '\n';
  finish_out(acc, acc_path);

  if (a.cc_ablation && !rep.mmd_with_cc.empty()) {
    // Plot-ready curve: mean across seeds per epoch; per-seed curves live in
    // the JSON report.
    std::ofstream mmd = open_out(mmd_path);
    mmd << "epoch,mmd_with_cc,mmd_without_cc\n";
    const std::size_t epochs = rep.mmd_with_cc.front().size();
    const double inv = 1.0 / static_cast<double>(rep.mmd_with_cc.size());
    for (std::size_t e = 0; e < epochs; ++e) {
      double with = 0.0, without = 0.0;
      for (std::size_t s = 0; s < rep.mmd_with_cc.size(); ++s) {
        with += rep.mmd_with_cc[s][e];
        without += rep.mmd_without_cc[s][e];
      }
      mmd << (e + 1) << ',' << fmt(with * inv) << ',' << fmt(without * inv) << '\n';
    }
    finish_out(mmd, mmd_path);
  }

  ojson jr;
  jr["seeds"] = rep.seeds;
  jr["strategies"] = ojson::array();
  for (const auto& st : rep.strategies) {
    ojson js;
    js["name"] = strategy_name(st.strategy);
    js["accuracies"] = st.accuracies;
    js["mean"] = st.mean;
    js["stddev"] = st.stddev;
    jr["strategies"].push_back(js);
  }
  jr["mmd_with_cc"] = rep.mmd_with_cc;
  jr["mmd_without_cc"] = rep.mmd_without_cc;
  jr["final_acc_with_cc"] = rep.final_acc_with_cc;
  jr["final_acc_without_cc"] = rep.final_acc_without_cc;
  jr["source_accuracy_mean"] = rep.source_accuracy_mean;
  jr["gap_accuracy_mean"] = rep.gap_accuracy_mean;
  jr["domain_gap_detected"] = rep.domain_gap_detected;
  write_text(report_path, jr.dump(2) + "\n");

  for (const auto& st : rep.strategies) {
    ojson js;
    js["event"] = "strategy";
    js["name"] = strategy_name(st.strategy);
    js["mean"] = st.mean;
    js["stddev"] = st.stddev;
    emit(js);
  }
  if (!rep.domain_gap_detected) {
    ojson warn;
    warn["event"] = "warning";
    warn["message"] = "no domain gap detected; the shift may be null";
    warn["source_accuracy_mean"] = rep.source_accuracy_mean;
    warn["gap_accuracy_mean"] = rep.gap_accuracy_mean;
    emit(warn);
    std::cerr << "warning: no domain gap detected (source "
              << fmt(rep.source_accuracy_mean) << " vs target "
              << fmt(rep.gap_accuracy_mean) << "); the shift may be null\n";
  }
  ojson done;
  done["event"] = "bench_done";
  done["source_accuracy_mean"] = rep.source_accuracy_mean;
  done["gap_accuracy_mean"] = rep.gap_accuracy_mean;
  done["domain_gap_detected"] = rep.domain_gap_detected;
  done["out_dir"] = a.out_dir;
  emit(done);
  return kExitOk;
}

// ---- mmd ----

struct MmdArgs {
  CommonFlags common;
  std::string features_path;
  std::string model_path;
  std::string labels_path;
  std::string centroids_path;
  std::string kernel = "linear";
  bool skip_empty = false;
};

int run_mmd(const CLI::App& sub, MmdArgs& a) {
  const json cfg = resolve_config(sub, a.common);
  overlay_common(sub, cfg, a.common);
  overlay(sub, cfg, "kernel", a.kernel);
  overlay(sub, cfg, "skip-empty", a.skip_empty);
  const FileFormat format = parse_format(a.common.format);
  const MmdKernel kernel = parse_kernel(a.kernel);

  const bool have_model = !a.model_path.empty();
  if (!have_model && (a.labels_path.empty() || a.centroids_path.empty()))
    throw std::invalid_argument(
        "mmd needs either --model (labels and centroids derived from its "
        "predictions) or both --labels and --centroids");

  const FeatureMatrix features = load_features(a.features_path, format, a.common.csv_header);
  FeatureMatrix embeddings;
  std::vector<std::uint32_t> labels;
  FeatureMatrix centroids;
  if (have_model) {
    const NetModel model = load_model(a.model_path);
    ForwardResult fr = forward(model, features);
    const ProbMatrix probs = softmax_rows(fr.logits);
    if (a.labels_path.empty()) {
      labels.resize(fr.logits.rows);
      for (std::size_t i = 0; i < fr.logits.rows; ++i) {
        std::size_t best = 0;
        for (std::size_t c = 1; c < fr.logits.cols; ++c)
          if (fr.logits.at(i, c) > fr.logits.at(i, best)) best = c;
        labels[i] = static_cast<std::uint32_t>(best);
      }
    } else {
      labels = load_labels(a.labels_path).labels;
    }
    centroids = a.centroids_path.empty() ? compute_centroids(fr.embeddings, probs)
                                         : load_features(a.centroids_path, format);
    embeddings = std::move(fr.embeddings);
  } else {
    embeddings = features;
    labels = load_labels(a.labels_path).labels;
    centroids = load_features(a.centroids_path, format);
  }

  const double value = mmd_to_centroids(embeddings, labels, centroids, kernel, a.skip_empty);
  ojson line;
  line["event"] = "mmd";
  line["value"] = value;
  line["kernel"] = a.kernel;
  line["classes"] = centroids.rows;
  emit(line);
  return kExitOk;
}

int dispatch(CLI::App& app, int argc, char** argv) {
  app.require_subcommand(1);

  auto* synth_sub = app.add_subcommand("synth-gen", "generate a synthetic shifted domain pair");
  auto synth_args = std::make_shared<SynthGenArgs>();
  add_common(synth_sub, synth_args->common);
  add_synth_flags(synth_sub, synth_args->synth);
  synth_sub->add_option("--out-dir", synth_args->out_dir, "output directory")->required();

  auto* pre_sub = app.add_subcommand("pretrain", "train the source model on labeled features");
  auto pre_args = std::make_shared<PretrainArgs>();
  add_common(pre_sub, pre_args->common);
  pre_sub->add_option("--features", pre_args->features_path, "source feature file")->required();
  pre_sub->add_option("--labels", pre_args->labels_path, "source label file")->required();
  pre_sub->add_option("--out-model", pre_args->out_model, "checkpoint to write")->required();
  pre_sub->add_option("--epochs", pre_args->cfg.epochs, "training epochs");
  pre_sub->add_option("--batch-size", pre_args->cfg.batch_size, "minibatch size");
  pre_sub->add_option("--lr", pre_args->cfg.lr, "learning rate");
  pre_sub->add_option("--label-smoothing", pre_args->cfg.label_smoothing, "smoothing alpha");
  pre_sub->add_option("--hidden", pre_args->hidden, "backbone layer widths")->delimiter(',');
  pre_sub->add_option("--embed-dim", pre_args->cfg.embed_dim, "bottleneck width");

  auto* sel_sub = app.add_subcommand("select", "pick the annotation batch to actively label");
  auto sel_args = std::make_shared<SelectArgs>();
  add_common(sel_sub, sel_args->common);
  sel_sub->add_option("--features", sel_args->features_path, "target feature file")->required();
  sel_sub->add_option("--model", sel_args->model_path, "source checkpoint")->required();
  sel_sub->add_option("--labels-oracle", sel_args->labels_path, "annotator label file")
      ->required();
  sel_sub->add_option("--out", sel_args->out_path, "active set JSON to write")->required();
  sel_sub->add_option("--budget", sel_args->budget, "labeling budget fraction in (0,1]");
  sel_sub->add_option("--k", sel_args->k, "neighbor count (0 disables)");
  sel_sub->add_option("--trees", sel_args->trees, "homogeneity ensemble size");
  sel_sub->add_option("--subsample", sel_args->subsample, "per-tree subset size");
  sel_sub->add_option("--metric", sel_args->metric, "similarity metric")
      ->check(CLI::IsMember({"correlation", "cosine", "euclidean"}));
  sel_sub->add_option("--dump-knn", sel_args->dump_knn, "write the neighbor graph CSV here");
  sel_sub->add_option("--dump-scores", sel_args->dump_scores, "write per-sample score CSV here");

  auto* adp_sub = app.add_subcommand("adapt", "adapt the source model to unlabeled target data");
  auto adp_args = std::make_shared<AdaptArgs>();
  add_common(adp_sub, adp_args->common);
  adp_sub->add_option("--model", adp_args->model_path, "source checkpoint")->required();
  adp_sub->add_option("--features", adp_args->features_path, "target feature file")->required();
  adp_sub->add_option("--labels-oracle", adp_args->labels_path, "annotator label file")
      ->required();
  adp_sub->add_option("--out-model", adp_args->out_model, "adapted checkpoint")->required();
  adp_sub->add_option("--out-report", adp_args->out_report,
                      "report JSON (default: <out-model stem>.report.json)");
  adp_sub->add_option("--out-epochs", adp_args->out_epochs,
                      "per-epoch CSV (default: <out-model stem>.epochs.csv)");
  adp_sub->add_option("--active", adp_args->active_path,
                      "active set JSON from select (skips internal selection)");
  adp_sub->add_option("--dump-pseudo", adp_args->dump_pseudo,
                      "write per-round pseudo-label CSV here (epoch 0 = initial)");
  adp_sub->add_option("--epochs", adp_args->cfg.epochs, "adaptation epochs");
  adp_sub->add_option("--batch-size", adp_args->cfg.batch_size, "minibatch size");
  adp_sub->add_option("--budget", adp_args->cfg.budget_fraction, "labeling budget fraction");
  adp_sub->add_option("--k", adp_args->cfg.k_neighbors, "neighbor count (0 disables)");
  adp_sub->add_option("--trees", adp_args->cfg.trees, "homogeneity ensemble size");
  adp_sub->add_option("--subsample", adp_args->cfg.subsample_size, "per-tree subset size");
  adp_sub->add_option("--lr", adp_args->cfg.lr_backbone,
                      "backbone learning rate (bottleneck runs at 10x)");
  adp_sub->add_option("--metric", adp_args->metric, "similarity metric")
      ->check(CLI::IsMember({"correlation", "cosine", "euclidean"}));
  adp_sub->add_flag("--ablate-cc", adp_args->ablate_cc, "drop the centroid-alignment loss");
  adp_sub->add_flag("--refresh-hpe", adp_args->cfg.refresh_hpe,
                    "recompute homogeneity scores at each refinement");
  adp_sub->add_flag("--freeze-classifier", adp_args->cfg.freeze_classifier,
                    "do not update the classifier head");
  adp_sub->add_flag("--no-shuffle", adp_args->no_shuffle, "keep sample order fixed per epoch");

  auto* bench_sub =
      app.add_subcommand("bench", "paired selection-strategy benchmark on synthetic shift");
  auto bench_args = std::make_shared<BenchArgs>();
  add_common(bench_sub, bench_args->common);
  add_synth_flags(bench_sub, bench_args->synth);
  bench_sub->add_option("--out-dir", bench_args->out_dir, "output directory")->required();
  bench_sub->add_option("--strategies", bench_args->strategies,
                        "selection strategies to compare")
      ->delimiter(',');
  bench_sub->add_option("--seeds", bench_args->seeds, "paired seed count (>= 3)");
  bench_sub->add_flag("--cc-ablation,!--no-cc-ablation", bench_args->cc_ablation,
                      "run the paired ablation without the centroid loss");
  bench_sub->add_option("--epochs", bench_args->adapt_epochs, "adaptation epochs per run");
  bench_sub->add_option("--lr", bench_args->lr, "backbone learning rate");
  bench_sub->add_option("--budget", bench_args->budget, "labeling budget fraction");

  auto* mmd_sub = app.add_subcommand("mmd", "class-compactness discrepancy of an embedding");
  auto mmd_args = std::make_shared<MmdArgs>();
  add_common(mmd_sub, mmd_args->common);
  mmd_sub->add_option("--features", mmd_args->features_path,
                      "embedding file (or raw inputs when --model is given)")
      ->required();
  mmd_sub->add_option("--model", mmd_args->model_path,
                      "checkpoint; embeddings, labels, and centroids derive from it");
  mmd_sub->add_option("--labels", mmd_args->labels_path, "per-sample class file");
  mmd_sub->add_option("--centroids", mmd_args->centroids_path, "centroid feature file");
  mmd_sub->add_option("--kernel,--mmd-kernel", mmd_args->kernel, "mmd kernel")
      ->check(CLI::IsMember({"linear", "rbf"}));
  mmd_sub->add_flag("--skip-empty", mmd_args->skip_empty, "ignore classes with no members");

  app.parse(argc, argv);

  if (synth_sub->parsed()) return run_synth_gen(*synth_sub, *synth_args);
  if (pre_sub->parsed()) return run_pretrain(*pre_sub, *pre_args);
  if (sel_sub->parsed()) return run_select(*sel_sub, *sel_args);
  if (adp_sub->parsed()) return run_adapt(*adp_sub, *adp_args);
  if (bench_sub->parsed()) return run_bench(*bench_sub, *bench_args);
  if (mmd_sub->parsed()) return run_mmd(*mmd_sub, *mmd_args);
  return kExitArgs;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"active source-free domain adaptation on feature embeddings"};
  try {
    return dispatch(app, argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitArgs;
  } catch (const divergence_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitDivergence;
  } catch (const degenerate_class_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitDivergence;
  } catch (const io_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitIo;
  } catch (const format_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitIo;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitIo;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitArgs;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << '\n';
    return 1;
  }
}
