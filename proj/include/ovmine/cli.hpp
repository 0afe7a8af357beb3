// Copyright 2026 The ovmine Authors.
// SPDX-License-Identifier: Apache-2.0

// Command-line front end. Subcommands:
//   synth      generate a synthetic world, its truth file and biased scores
//   mine       mine proposal/concept pairs for every image of a dataset
//   score      set similarity matrices and hinge loss over mined batches
//   calibrate  cluster mined embeddings per concept and write bias.json
//   adjust     subtract gamma * beta from a score matrix
//   eval       mining precision/recall or bias report as CSV
//
// Exit codes: 0 success, 1 usage or parameter error, 2 data error.

#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "ovmine/class_adjust.hpp"
#include "ovmine/concept_augment.hpp"
#include "ovmine/config.hpp"
#include "ovmine/dataset.hpp"
#include "ovmine/error.hpp"
#include "ovmine/evaluate.hpp"
#include "ovmine/imram.hpp"
#include "ovmine/mined_io.hpp"
#include "ovmine/parallel.hpp"
#include "ovmine/proposal_mining.hpp"
#include "ovmine/synth.hpp"
#include "ovmine/tensor_io.hpp"

namespace ovmine {

inline constexpr std::size_t kDefaultBatchSize = 8;

struct RunConfig {
  std::string subcommand;
  std::string out;
  std::size_t workers = 1;

  // Input paths, resolved to absolute form before execution.
  std::string dataset;
  std::string mined;
  std::string truth;
  std::string scores;
  std::string bias;
  std::string adjusted;
  std::string weights;

  MiningParams mining;
  std::uint64_t weights_seed = 0;
  MatchParams match;
  std::size_t batch_size = kDefaultBatchSize;
  ClusterParams cluster;
  std::string population = "mined";
  double gamma = kDefaultGamma;
  double iou_threshold = 0.5;
  std::string kind = "mining";
  WorldConfig world;
  ScorerConfig scorer;

  // Effective configuration for run.meta. `out` and `workers` are left out:
  // neither changes any output byte.
  KeyValues to_key_values() const {
    KeyValues kv = world.to_key_values();
    kv["subcommand"] = subcommand;
    kv["dataset"] = dataset;
    kv["mined"] = mined;
    kv["truth"] = truth;
    kv["scores"] = scores;
    kv["bias"] = bias;
    kv["adjusted"] = adjusted;
    kv["weights"] = weights;
    kv["theta_iou"] = format_double(mining.theta_iou);
    kv["top_k"] = std::to_string(mining.top_k);
    kv["augment"] = mining.use_augmentation ? "true" : "false";
    kv["weights_seed"] = std::to_string(weights_seed);
    kv["steps"] = std::to_string(match.steps);
    kv["margin"] = format_double(match.margin);
    kv["lambda"] = format_double(match.temperature);
    kv["batch_size"] = std::to_string(batch_size);
    kv["neighbor_fraction"] = format_double(cluster.neighbor_fraction);
    kv["center_sigma"] = format_double(cluster.center_sigma);
    kv["population"] = population;
    kv["gamma"] = format_double(gamma);
    kv["iou_threshold"] = format_double(iou_threshold);
    kv["kind"] = kind;
    kv["logit_scale"] = format_double(scorer.logit_scale);
    kv["inflation"] = format_double(scorer.inflation_per_instance);
    return kv;
  }

  static std::set<std::string> known_keys() {
    std::set<std::string> keys;
    for (const auto& [k, v] : RunConfig{}.to_key_values()) keys.insert(k);
    keys.insert("out");
    keys.insert("workers");
    return keys;
  }
};

namespace detail {

inline std::string option_name(std::string key) {
  std::replace(key.begin(), key.end(), '_', '-');
  return "--" + key;
}

// Config values fill options the command line left unset. Keys belonging to
// other subcommands are accepted and ignored so run.meta replays directly.
inline void merge_config(CLI::App& sub, const KeyValues& kv, const std::string& origin) {
  reject_unknown_keys(kv, RunConfig::known_keys(), origin);
  for (const auto& [key, value] : kv) {
    if (key == "subcommand") {
      if (!value.empty() && value != sub.get_name()) {
        throw ParamError(origin + ": config is for subcommand `" + value + "`, not `" + sub.get_name() + "`");
      }
      continue;
    }
    CLI::Option* opt = sub.get_option_no_throw(option_name(key));
    if (opt == nullptr || opt->count() > 0 || value.empty()) continue;
    try {
      opt->add_result(value);
      opt->run_callback();
    } catch (const CLI::Error& e) {
      throw ParamError(origin + ": bad value for `" + key + "`: " + e.what());
    }
  }
}

inline std::string resolve_input(const std::string& path, const char* flag) {
  if (path.empty()) throw ParamError(std::string("missing required ") + flag);
  std::error_code ec;
  if (!std::filesystem::exists(path, ec)) throw DataError("missing file: " + path);
  return std::filesystem::weakly_canonical(std::filesystem::absolute(path)).string();
}

inline std::filesystem::path prepare_out(const RunConfig& cfg) {
  if (cfg.out.empty()) throw ParamError("missing required --out");
  std::filesystem::path dir(cfg.out);
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw DataError("cannot create output directory: " + cfg.out);
  return dir;
}

inline void write_run_meta(const RunConfig& cfg, const std::filesystem::path& dir) {
  std::ofstream out(dir / "run.meta", std::ios::trunc);
  if (!out) throw DataError("cannot open for writing: " + (dir / "run.meta").string());
  out << "# ovmine run record\n";
  write_key_values(out, cfg.to_key_values());
}

template <typename Writer>
void write_text(const std::filesystem::path& path, Writer&& writer) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot open for writing: " + path.string());
  writer(out);
}

inline void run_synth(const RunConfig& cfg, std::ostream& err) {
  cfg.world.validate();
  cfg.scorer.validate();
  const auto dir = prepare_out(cfg);
  const World world = generate_world(cfg.world, cfg.workers);
  save_dataset(world.dataset, dir);
  save_truth(world.truth, dir / "truth.jsonl");
  save_tensor(biased_scores(world.dataset, world.truth, cfg.scorer), dir / "scores_raw.mdet");
  write_run_meta(cfg, dir);
  err << "synth: seed=" << cfg.world.seed << " images=" << cfg.world.images
      << " concepts=" << cfg.world.concept_count() << " proposals=" << world.dataset.proposal_embeddings.rows()
      << '\n';
}

inline void run_mine(const RunConfig& cfg, std::ostream& err) {
  cfg.mining.validate();
  err << "mine: theta_iou=" << format_double(cfg.mining.theta_iou) << " top_k=" << cfg.mining.top_k
      << " augment=" << (cfg.mining.use_augmentation ? "true" : "false") << '\n';
  const Dataset ds = load_dataset(cfg.dataset);
  std::optional<AttentionWeights> weights;
  if (cfg.mining.use_augmentation) {
    weights = cfg.weights.empty()
                  ? AttentionWeights::random(ds.dim(), AttentionWeights::default_hidden(ds.dim()), cfg.weights_seed)
                  : load_attention_weights(cfg.weights);
  }
  const auto dir = prepare_out(cfg);
  std::vector<MinedSet> sets(ds.images.size());
  parallel_for(ds.images.size(), cfg.workers, [&](std::size_t i) {
    sets[i] = mine_image(ds.images[i], ds, weights ? &*weights : nullptr, cfg.mining);
  });
  const std::size_t pairs = save_mined(sets, dir, ds.dim());
  write_run_meta(cfg, dir);
  err << "mine: images=" << ds.images.size() << " pairs=" << pairs << '\n';
}

inline void run_score(const RunConfig& cfg, std::ostream& err) {
  cfg.match.validate();
  if (cfg.batch_size == 0) throw ParamError("batch_size must be positive");
  const std::vector<MinedSet> sets = load_mined(cfg.mined);
  if (sets.empty()) throw DataError("no mined sets in " + cfg.mined);
  const auto dir = prepare_out(cfg);
  const std::size_t batches = (sets.size() + cfg.batch_size - 1) / cfg.batch_size;
  std::vector<std::vector<double>> matrices(batches);
  std::vector<double> losses(batches);
  parallel_for(batches, cfg.workers, [&](std::size_t b) {
    std::vector<SetPair> batch;
    for (std::size_t i = b * cfg.batch_size; i < std::min(sets.size(), (b + 1) * cfg.batch_size); ++i) {
      batch.push_back(SetPair{sets[i].proposal_embeddings(), sets[i].concept_embeddings()});
    }
    matrices[b] = similarity_matrix(batch, cfg.match);
    losses[b] = ram_loss_from_matrix(matrices[b], batch.size(), cfg.match.margin);
  });
  write_text(dir / "similarity.csv", [&](std::ostream& out) {
    out << "batch,i,j,image_i,image_j,similarity\n";
    for (std::size_t b = 0; b < batches; ++b) {
      const std::size_t first = b * cfg.batch_size;
      const std::size_t n = std::min(sets.size(), first + cfg.batch_size) - first;
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
          out << b << ',' << i << ',' << j << ',' << sets[first + i].image_id << ',' << sets[first + j].image_id
              << ',' << format_double(matrices[b][i * n + j]) << '\n';
        }
      }
    }
  });
  double total = 0.0;
  write_text(dir / "loss.csv", [&](std::ostream& out) {
    out << "batch,size,loss\n";
    for (std::size_t b = 0; b < batches; ++b) {
      const std::size_t first = b * cfg.batch_size;
      out << b << ',' << std::min(sets.size(), first + cfg.batch_size) - first << ',' << format_double(losses[b])
          << '\n';
      total += losses[b];
    }
  });
  write_run_meta(cfg, dir);
  err << "score: batches=" << batches << " total_loss=" << format_double(total) << '\n';
}

// Embeddings per concept: mined pairs, or every dataset proposal labelled by
// the argmax of the raw score matrix.
inline std::map<ConceptId, std::vector<Vector>> cluster_population(const RunConfig& cfg, const Dataset& ds) {
  std::map<ConceptId, std::vector<Vector>> pop;
  if (cfg.population == "mined") {
    for (const auto& set : load_mined(cfg.mined)) {
      for (const auto& c : set.concepts) {
        for (const auto& p : c.proposals) pop[c.concept_id].push_back(p.embedding);
      }
    }
    return pop;
  }
  const Tensor scores = load_tensor(cfg.scores);
  if (scores.shape.size() != 2 || scores.shape[1] != ds.vocabulary.size() ||
      scores.rows() != ds.proposal_embeddings.rows()) {
    throw DataError("score matrix does not match the dataset's proposals x vocabulary");
  }
  for (std::size_t r = 0; r < scores.rows(); ++r) {
    const std::size_t q = argmax(scores.row_vector(r));
    pop[ds.vocabulary[q].concept_id].push_back(ds.proposal_embeddings.row_vector(r));
  }
  return pop;
}

inline void run_calibrate(const RunConfig& cfg, std::ostream& err) {
  cfg.cluster.validate();
  if (!(cfg.gamma >= 0.0) || !std::isfinite(cfg.gamma)) throw ParamError("gamma must be non-negative");
  const Dataset ds = load_dataset(cfg.dataset);
  const auto pop = cluster_population(cfg, ds);
  for (const auto& [id, points] : pop) {
    if (ds.find_concept(id) == nullptr) throw DataError("mined concept " + std::to_string(id) + " not in vocabulary");
  }
  const auto dir = prepare_out(cfg);
  std::vector<const std::pair<const ConceptId, std::vector<Vector>>*> items;
  for (const auto& item : pop) items.push_back(&item);
  std::vector<ClusterResult> results(items.size());
  parallel_for(items.size(), cfg.workers, [&](std::size_t i) {
    results[i] = density_peak_cluster(items[i]->second, cfg.cluster, items[i]->first);
  });
  const BiasVector bias = compute_bias(results, ds.concept_ids(), cfg.gamma);
  save_bias(bias, dir / "bias.json");
  write_text(dir / "clusters.csv", [&](std::ostream& out) {
    out << "concept_id,points,k,n_tilde,halo,cutoff,beta\n";
    for (const auto& r : results) {
      out << r.concept_id << ',' << r.point_count << ',' << r.cluster_count << ',' << r.retained_count << ','
          << r.point_count - r.retained_count << ',' << format_double(r.cutoff) << ','
          << format_double(bias.beta(r.concept_id)) << '\n';
    }
  });
  write_run_meta(cfg, dir);
  err << "calibrate: concepts=" << bias.entries.size() << " clustered=" << results.size() << '\n';
}

inline void run_adjust(RunConfig& cfg, bool gamma_given, std::ostream& err) {
  const Tensor scores = load_tensor(cfg.scores);
  const BiasVector bias = load_bias(cfg.bias);
  if (!gamma_given) cfg.gamma = bias.gamma;
  const auto dir = prepare_out(cfg);
  save_tensor(adjust_score_matrix(scores, bias, cfg.gamma), dir / "adjusted.mdet");
  write_run_meta(cfg, dir);
  err << "adjust: gamma=" << format_double(cfg.gamma) << " rows=" << scores.rows() << '\n';
}

inline void run_eval(const RunConfig& cfg, std::ostream& err) {
  const GroundTruth truth = load_truth(cfg.truth);
  const auto dir = prepare_out(cfg);
  if (cfg.kind == "mining") {
    const auto sets = load_mined(cfg.mined);
    const MiningReport report = eval_mining(sets, truth, cfg.iou_threshold);
    write_text(dir / "mining.csv", [&](std::ostream& out) { write_mining_csv(out, report); });
    write_run_meta(cfg, dir);
    err << "eval: precision=" << format_double(report.precision()) << " recall=" << format_double(report.recall())
        << '\n';
    return;
  }
  const Dataset ds = load_dataset(cfg.dataset);
  const BiasReport report = eval_bias(load_tensor(cfg.scores), load_tensor(cfg.adjusted), truth, ds.vocabulary);
  write_text(dir / "bias.csv", [&](std::ostream& out) { write_bias_csv(out, report); });
  write_run_meta(cfg, dir);
  err << "eval: raw_gap=" << format_double(report.raw.gap()) << " adjusted_gap=" << format_double(report.adjusted.gap())
      << '\n';
}

}  // namespace detail

// Parses argv, runs one subcommand and returns the process exit code.
// Diagnostics go to `err`; help text goes to `out`.
inline int run_cli(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  RunConfig cfg;
  std::string config_path;

  CLI::App app{"Proposal mining and class-wise score adjustment over precomputed embeddings", "ovmine"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Expand all help");

  auto common = [&](CLI::App* sub) {
    sub->add_option("--out", cfg.out, "Output directory");
    sub->add_option("--workers", cfg.workers, "Worker threads")->capture_default_str();
    sub->add_option("--config", config_path, "Config file of `key = value` lines");
  };

  CLI::App* synth = app.add_subcommand("synth", "Generate a synthetic world");
  common(synth);
  WorldConfig& w = cfg.world;
  synth->add_option("--seed", w.seed, "World seed")->capture_default_str();
  synth->add_option("--dim", w.dim, "Embedding dimension")->capture_default_str();
  synth->add_option("--base-concepts", w.base_concepts)->capture_default_str();
  synth->add_option("--novel-concepts", w.novel_concepts)->capture_default_str();
  synth->add_option("--images", w.images)->capture_default_str();
  synth->add_option("--objects-per-image", w.objects_per_image)->capture_default_str();
  synth->add_option("--proposals-per-object", w.proposals_per_object)->capture_default_str();
  synth->add_option("--distractors", w.distractors_per_image, "Distractor proposals per image")->capture_default_str();
  synth->add_option("--fragment-rate", w.fragment_rate)->capture_default_str();
  synth->add_option("--noise", w.embedding_noise, "Embedding noise sigma")->capture_default_str();
  synth->add_option("--frequency-ratio", w.frequency_ratio, "Base over novel frequency")->capture_default_str();
  synth->add_option("--min-angle", w.min_angle_deg, "Minimum inter-concept angle in degrees")->capture_default_str();
  synth->add_option("--background-noise", w.background_noise)->capture_default_str();
  synth->add_option("--image-width", w.image_width)->capture_default_str();
  synth->add_option("--image-height", w.image_height)->capture_default_str();
  synth->add_option("--logit-scale", cfg.scorer.logit_scale, "Scorer cosine scale")->capture_default_str();
  synth->add_option("--inflation", cfg.scorer.inflation_per_instance, "Scorer inflation per training instance")
      ->capture_default_str();

  CLI::App* mine_cmd = app.add_subcommand("mine", "Mine proposal/concept pairs");
  common(mine_cmd);
  mine_cmd->add_option("--dataset", cfg.dataset, "Dataset manifest");
  mine_cmd->add_option("--theta-iou", cfg.mining.theta_iou, "Fragment merge IoU threshold")->capture_default_str();
  mine_cmd->add_option("--top-k", cfg.mining.top_k, "Proposals matched per concept")->capture_default_str();
  mine_cmd->add_option("--augment", cfg.mining.use_augmentation, "Apply concept augmentation (true/false)")
      ->capture_default_str();
  mine_cmd->add_option("--weights", cfg.weights, "Attention weight manifest");
  mine_cmd->add_option("--weights-seed", cfg.weights_seed, "Seed for random attention weights")
      ->capture_default_str();

  CLI::App* score = app.add_subcommand("score", "Set similarity and ranking loss over mined batches");
  common(score);
  score->add_option("--mined", cfg.mined, "Mined directory");
  score->add_option("--steps", cfg.match.steps, "Matching steps K")->capture_default_str();
  score->add_option("--margin", cfg.match.margin, "Hinge margin")->capture_default_str();
  score->add_option("--lambda", cfg.match.temperature, "Attention temperature")->capture_default_str();
  score->add_option("--batch-size", cfg.batch_size)->capture_default_str();

  CLI::App* calibrate = app.add_subcommand("calibrate", "Cluster embeddings per concept and compute bias terms");
  common(calibrate);
  calibrate->add_option("--dataset", cfg.dataset, "Dataset manifest (vocabulary)");
  calibrate->add_option("--mined", cfg.mined, "Mined directory");
  calibrate->add_option("--scores", cfg.scores, "Raw score matrix (population = predicted)");
  calibrate->add_option("--population", cfg.population, "mined or predicted")
      ->check(CLI::IsMember({"mined", "predicted"}))
      ->capture_default_str();
  calibrate->add_option("--neighbor-fraction", cfg.cluster.neighbor_fraction)->capture_default_str();
  calibrate->add_option("--center-sigma", cfg.cluster.center_sigma)->capture_default_str();
  calibrate->add_option("--gamma", cfg.gamma, "Adjustment strength recorded in bias.json")->capture_default_str();

  CLI::App* adjust = app.add_subcommand("adjust", "Apply bias terms to a score matrix");
  common(adjust);
  adjust->add_option("--scores", cfg.scores, "Raw score matrix");
  adjust->add_option("--bias", cfg.bias, "bias.json");
  CLI::Option* gamma_opt = adjust->add_option("--gamma", cfg.gamma, "Override the bias file's gamma");

  CLI::App* eval = app.add_subcommand("eval", "Evaluate mining quality or score bias");
  common(eval);
  eval->add_option("--kind", cfg.kind, "mining or bias")
      ->check(CLI::IsMember({"mining", "bias"}))
      ->capture_default_str();
  eval->add_option("--truth", cfg.truth, "truth.jsonl");
  eval->add_option("--mined", cfg.mined, "Mined directory (kind = mining)");
  eval->add_option("--iou-threshold", cfg.iou_threshold)->capture_default_str();
  eval->add_option("--dataset", cfg.dataset, "Dataset manifest (kind = bias)");
  eval->add_option("--scores", cfg.scores, "Raw score matrix (kind = bias)");
  eval->add_option("--adjusted", cfg.adjusted, "Adjusted score matrix (kind = bias)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "ovmine: error: " << e.what() << '\n';
    return 1;
  }

  CLI::App* sub = app.get_subcommands().front();
  cfg.subcommand = sub->get_name();
  try {
    if (!config_path.empty()) detail::merge_config(*sub, load_key_values(config_path), config_path);
    if (cfg.workers == 0) throw ParamError("workers must be positive");
    auto need = [](std::string& path, const char* flag) { path = detail::resolve_input(path, flag); };
    if (sub == synth) {
      detail::run_synth(cfg, err);
    } else if (sub == mine_cmd) {
      need(cfg.dataset, "--dataset");
      if (!cfg.weights.empty()) need(cfg.weights, "--weights");
      detail::run_mine(cfg, err);
    } else if (sub == score) {
      need(cfg.mined, "--mined");
      detail::run_score(cfg, err);
    } else if (sub == calibrate) {
      need(cfg.dataset, "--dataset");
      if (cfg.population == "mined") {
        need(cfg.mined, "--mined");
      } else {
        need(cfg.scores, "--scores");
      }
      detail::run_calibrate(cfg, err);
    } else if (sub == adjust) {
      need(cfg.scores, "--scores");
      need(cfg.bias, "--bias");
      detail::run_adjust(cfg, gamma_opt->count() > 0, err);
    } else {
      need(cfg.truth, "--truth");
      if (cfg.kind == "mining") {
        need(cfg.mined, "--mined");
      } else {
        need(cfg.dataset, "--dataset");
        need(cfg.scores, "--scores");
        need(cfg.adjusted, "--adjusted");
      }
      detail::run_eval(cfg, err);
    }
  } catch (const ParamError& e) {
    err << "ovmine: error: " << e.what() << '\n';
    return 1;
  } catch (const DataError& e) {
    err << "ovmine: data error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    err << "ovmine: data error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}

}  // namespace ovmine
