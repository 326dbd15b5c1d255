// Copyright 2026 WeevilWatch contributors. Licensed under the Apache-2.0 license.

#ifndef WW_CLASSIFIER_HPP
#define WW_CLASSIFIER_HPP

#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ww/cqcc.hpp"
#include "ww/sensor.hpp"

namespace ww::classify {

/// Fisher-Yates with an explicit index draw so the permutation depends only
/// on the engine state, not on the standard library's shuffle internals.
template <typename T>
void deterministic_shuffle(std::vector<T>& items, std::mt19937_64& rng) {
  for (std::size_t i = items.size(); i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng() % i);
    std::swap(items[i - 1], items[j]);
  }
}

/// Per-clip pooling: mean of each cepstral coefficient over frames, then the
/// population std of each, concatenated (length 2 * n_cepstra).
std::vector<double> pool_features(const cqcc::RealMatrix& features);

struct SplitSpec {
  double train_ratio = 0.8;
  double val_ratio = 0.1;
  double test_ratio = 0.1;
  std::uint64_t seed = 0;

  void validate() const;  // ratios non-negative, summing to 1 within 1e-12
};

struct SplitResult {
  sensor::DatasetManifest train;
  sensor::DatasetManifest val;
  sensor::DatasetManifest test;
};

/// Stratified split: records are grouped per label, shuffled deterministically
/// by seed, and floor-allocated (val and test take floor(n*ratio) each, the
/// remainder goes to train). Unlabeled records are rejected.
SplitResult split_dataset(const sensor::DatasetManifest& manifest,
                          const SplitSpec& spec);

enum class ModelKind { NearestCentroid, Logistic };

const char* to_string(ModelKind kind);
ModelKind parse_model_kind(const std::string& token);

/// Trained classifier. Features are z-scored with the stored training stats
/// before either parameter set is applied.
struct ClassifierModel {
  ModelKind kind = ModelKind::Logistic;
  std::size_t n_features = 0;
  std::vector<double> feature_mean;
  std::vector<double> feature_std;

  // logistic
  std::vector<double> weights;
  double bias = 0.0;

  // nearest centroid (standardized space)
  std::vector<double> centroid_infested;
  std::vector<double> centroid_clean;
};

struct TrainExample {
  std::vector<double> features;
  bool infested = false;
};

struct TrainConfig {
  std::size_t batch_size = 16;
  double learning_rate = 1e-4;
  std::size_t epochs = 200;
  std::uint64_t seed = 0;
};

struct TrainOutcome {
  ClassifierModel model;
  std::vector<double> epoch_losses;  // mean training BCE after each epoch
};

/// Mean binary cross-entropy of the logistic model over `examples` at the
/// given parameters, plus its gradient.
struct LogisticEval {
  double loss = 0.0;
  std::vector<double> grad_weights;
  double grad_bias = 0.0;
};

LogisticEval logistic_loss(std::span<const TrainExample> examples,
                           std::span<const double> weights, double bias);

/// Trains the requested baseline. Logistic runs deterministic mini-batch
/// gradient descent on BCE; nearest centroid stores per-class means. Both
/// classes must be present.
TrainOutcome train(ModelKind kind, std::span<const TrainExample> examples,
                   const TrainConfig& config);

double sigmoid(double net);

struct Prediction {
  sensor::Label label = sensor::Label::NotInfested;
  double score = 0.0;  // probability of infestation
};

/// Scores a feature vector; label is infested iff score >= 0.5.
Prediction classify(const ClassifierModel& model,
                    std::span<const double> features);

/// Binary cross-entropy with the score clamped to [1e-12, 1 - 1e-12].
double bce_loss(double score, bool label);

struct ClassificationMetrics {
  double accuracy = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
  bool degenerate_precision = false;  // no positive predictions
  bool degenerate_recall = false;     // no positive truths
};

/// Confusion-matrix identities with infested as the positive class.
/// Zero-denominator precision/recall are reported as 0 and flagged.
ClassificationMetrics metrics_from_counts(std::size_t tp, std::size_t fp,
                                          std::size_t tn, std::size_t fn);

ClassificationMetrics evaluate(const ClassifierModel& model,
                               std::span<const TrainExample> test_set);

/// Metrics from precomputed (score, truth) pairs at threshold 0.5 — the
/// import path for externally produced per-clip scores.
ClassificationMetrics evaluate_score_pairs(
    std::span<const std::pair<double, bool>> scored);

void save_model(const std::filesystem::path& path, const ClassifierModel& m);
ClassifierModel load_model(const std::filesystem::path& path);

/// External-score CSV (header `record_id,score`, scores in [0,1]).
std::vector<std::pair<std::string, double>> load_scores_csv(
    const std::filesystem::path& path);

void save_metrics(const std::filesystem::path& path,
                  const ClassificationMetrics& metrics);

}  // namespace ww::classify

#endif  // WW_CLASSIFIER_HPP
