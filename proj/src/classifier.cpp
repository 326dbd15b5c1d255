// Copyright 2026 WeevilWatch contributors. Licensed under the Apache-2.0 license.

#include "ww/classifier.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>

#include <json.hpp>

#include "ww/digest.hpp"
#include "ww/error.hpp"

namespace ww::classify {

namespace {

using nlohmann::json;

constexpr double kProbClamp = 1e-12;

double clamp_prob(double p) {
  return std::clamp(p, kProbClamp, 1.0 - kProbClamp);
}

std::vector<double> standardize(const ClassifierModel& model,
                                std::span<const double> features) {
  std::vector<double> z(features.size());
  for (std::size_t i = 0; i < features.size(); ++i) {
    z[i] = (features[i] - model.feature_mean[i]) / model.feature_std[i];
  }
  return z;
}

double squared_distance(std::span<const double> a, std::span<const double> b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    acc += d * d;
  }
  return acc;
}

void fit_standardization(std::span<const TrainExample> examples,
                         ClassifierModel& model) {
  const std::size_t dim = model.n_features;
  model.feature_mean.assign(dim, 0.0);
  model.feature_std.assign(dim, 0.0);
  for (const auto& ex : examples) {
    for (std::size_t i = 0; i < dim; ++i) model.feature_mean[i] += ex.features[i];
  }
  for (auto& v : model.feature_mean) v /= static_cast<double>(examples.size());
  for (const auto& ex : examples) {
    for (std::size_t i = 0; i < dim; ++i) {
      const double d = ex.features[i] - model.feature_mean[i];
      model.feature_std[i] += d * d;
    }
  }
  for (auto& v : model.feature_std) {
    v = std::sqrt(v / static_cast<double>(examples.size()));
    if (v < 1e-12) v = 1.0;  // constant feature: pass through unscaled
  }
}

}  // namespace

std::vector<double> pool_features(const cqcc::RealMatrix& features) {
  if (features.rows == 0 || features.cols == 0) {
    throw Error(ErrorKind::Domain, "cannot pool an empty feature matrix");
  }
  const std::size_t N = features.rows;
  const std::size_t C = features.cols;
  std::vector<double> pooled(2 * C, 0.0);
  for (std::size_t n = 0; n < N; ++n) {
    for (std::size_t c = 0; c < C; ++c) pooled[c] += features.at(n, c);
  }
  for (std::size_t c = 0; c < C; ++c) pooled[c] /= static_cast<double>(N);
  for (std::size_t n = 0; n < N; ++n) {
    for (std::size_t c = 0; c < C; ++c) {
      const double d = features.at(n, c) - pooled[c];
      pooled[C + c] += d * d;
    }
  }
  for (std::size_t c = 0; c < C; ++c) {
    pooled[C + c] = std::sqrt(pooled[C + c] / static_cast<double>(N));
  }
  return pooled;
}

void SplitSpec::validate() const {
  if (train_ratio < 0.0 || val_ratio < 0.0 || test_ratio < 0.0) {
    throw Error(ErrorKind::Validation, "split ratios must be non-negative");
  }
  if (std::abs(train_ratio + val_ratio + test_ratio - 1.0) > 1e-12) {
    throw Error(ErrorKind::Validation, "split ratios must sum to 1");
  }
}

SplitResult split_dataset(const sensor::DatasetManifest& manifest,
                          const SplitSpec& spec) {
  spec.validate();
  for (const auto& r : manifest.records) {
    if (r.label == sensor::Label::Unlabeled) {
      throw Error(ErrorKind::Validation,
                  "cannot split unlabeled record: " + r.path);
    }
  }

  SplitResult result;
  for (sensor::Label label :
       {sensor::Label::Infested, sensor::Label::NotInfested}) {
    std::vector<std::size_t> indices;
    for (std::size_t i = 0; i < manifest.records.size(); ++i) {
      if (manifest.records[i].label == label) indices.push_back(i);
    }
    if (indices.empty()) continue;

    std::mt19937_64 rng(spec.seed ^ fnv1a64(sensor::to_string(label)));
    deterministic_shuffle(indices, rng);

    const std::size_t n = indices.size();
    const std::size_t n_val =
        static_cast<std::size_t>(std::floor(static_cast<double>(n) * spec.val_ratio));
    const std::size_t n_test =
        static_cast<std::size_t>(std::floor(static_cast<double>(n) * spec.test_ratio));
    const std::size_t n_train = n - n_val - n_test;

    for (std::size_t i = 0; i < n; ++i) {
      const auto& record = manifest.records[indices[i]];
      if (i < n_train) {
        result.train.records.push_back(record);
      } else if (i < n_train + n_val) {
        result.val.records.push_back(record);
      } else {
        result.test.records.push_back(record);
      }
    }
  }
  return result;
}

const char* to_string(ModelKind kind) {
  return kind == ModelKind::Logistic ? "logistic" : "nearest_centroid";
}

ModelKind parse_model_kind(const std::string& token) {
  if (token == "logistic") return ModelKind::Logistic;
  if (token == "nearest_centroid") return ModelKind::NearestCentroid;
  throw Error(ErrorKind::Validation, "unknown classifier kind: " + token);
}

double sigmoid(double net) { return 1.0 / (1.0 + std::exp(-net)); }

double bce_loss(double score, bool label) {
  const double p = clamp_prob(score);
  return label ? -std::log(p) : -std::log(1.0 - p);
}

LogisticEval logistic_loss(std::span<const TrainExample> examples,
                           std::span<const double> weights, double bias) {
  if (examples.empty()) {
    throw Error(ErrorKind::Domain, "logistic loss needs at least one example");
  }
  LogisticEval eval;
  eval.grad_weights.assign(weights.size(), 0.0);
  for (const auto& ex : examples) {
    double net = bias;
    for (std::size_t i = 0; i < weights.size(); ++i) {
      net += weights[i] * ex.features[i];
    }
    const double p = sigmoid(net);
    const double y = ex.infested ? 1.0 : 0.0;
    eval.loss += bce_loss(p, ex.infested);
    const double residual = p - y;  // d(BCE)/d(net)
    for (std::size_t i = 0; i < weights.size(); ++i) {
      eval.grad_weights[i] += residual * ex.features[i];
    }
    eval.grad_bias += residual;
  }
  const double inv = 1.0 / static_cast<double>(examples.size());
  eval.loss *= inv;
  eval.grad_bias *= inv;
  for (auto& g : eval.grad_weights) g *= inv;
  return eval;
}

TrainOutcome train(ModelKind kind, std::span<const TrainExample> examples,
                   const TrainConfig& config) {
  if (examples.empty()) {
    throw Error(ErrorKind::DegenerateData, "empty training set");
  }
  const std::size_t dim = examples.front().features.size();
  for (const auto& ex : examples) {
    if (ex.features.size() != dim) {
      throw Error(ErrorKind::Domain, "inconsistent feature dimensionality");
    }
  }
  const auto positives = static_cast<std::size_t>(std::count_if(
      examples.begin(), examples.end(), [](const auto& e) { return e.infested; }));
  if (positives == 0 || positives == examples.size()) {
    throw Error(ErrorKind::DegenerateData,
                "training set must contain both classes");
  }

  TrainOutcome outcome;
  ClassifierModel& model = outcome.model;
  model.kind = kind;
  model.n_features = dim;
  fit_standardization(examples, model);

  std::vector<TrainExample> standardized(examples.begin(), examples.end());
  for (auto& ex : standardized) {
    ex.features = standardize(model, ex.features);
  }

  if (kind == ModelKind::NearestCentroid) {
    model.centroid_infested.assign(dim, 0.0);
    model.centroid_clean.assign(dim, 0.0);
    std::size_t n_inf = 0, n_clean = 0;
    for (const auto& ex : standardized) {
      auto& centroid = ex.infested ? model.centroid_infested : model.centroid_clean;
      (ex.infested ? n_inf : n_clean) += 1;
      for (std::size_t i = 0; i < dim; ++i) centroid[i] += ex.features[i];
    }
    for (auto& v : model.centroid_infested) v /= static_cast<double>(n_inf);
    for (auto& v : model.centroid_clean) v /= static_cast<double>(n_clean);
    return outcome;
  }

  if (config.batch_size == 0 || config.epochs == 0 ||
      !(config.learning_rate > 0.0)) {
    throw Error(ErrorKind::Domain, "bad training hyperparameters");
  }

  model.weights.assign(dim, 0.0);
  model.bias = 0.0;

  std::mt19937_64 rng(config.seed);
  std::vector<std::size_t> order(standardized.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<TrainExample> batch;

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    deterministic_shuffle(order, rng);
    for (std::size_t start = 0; start < order.size();
         start += config.batch_size) {
      const std::size_t end =
          std::min(order.size(), start + config.batch_size);
      batch.assign(end - start, {});
      for (std::size_t i = start; i < end; ++i) {
        batch[i - start] = standardized[order[i]];
      }
      const auto eval = logistic_loss(batch, model.weights, model.bias);
      for (std::size_t i = 0; i < dim; ++i) {
        model.weights[i] -= config.learning_rate * eval.grad_weights[i];
      }
      model.bias -= config.learning_rate * eval.grad_bias;
    }
    outcome.epoch_losses.push_back(
        logistic_loss(standardized, model.weights, model.bias).loss);
  }
  return outcome;
}

Prediction classify(const ClassifierModel& model,
                    std::span<const double> features) {
  if (features.size() != model.n_features) {
    throw Error(ErrorKind::Domain,
                "feature vector has " + std::to_string(features.size()) +
                    " dimensions, model expects " +
                    std::to_string(model.n_features));
  }
  const auto z = standardize(model, features);

  double score = 0.0;
  if (model.kind == ModelKind::Logistic) {
    double net = model.bias;
    for (std::size_t i = 0; i < z.size(); ++i) net += model.weights[i] * z[i];
    score = sigmoid(net);
  } else {
    const double d_inf = std::sqrt(squared_distance(z, model.centroid_infested));
    const double d_clean = std::sqrt(squared_distance(z, model.centroid_clean));
    score = sigmoid(d_clean - d_inf);
  }
  Prediction p;
  p.score = score;
  p.label = score >= 0.5 ? sensor::Label::Infested : sensor::Label::NotInfested;
  return p;
}

ClassificationMetrics metrics_from_counts(std::size_t tp, std::size_t fp,
                                          std::size_t tn, std::size_t fn) {
  ClassificationMetrics m;
  m.tp = tp;
  m.fp = fp;
  m.tn = tn;
  m.fn = fn;
  const std::size_t total = tp + fp + tn + fn;
  m.accuracy = total == 0 ? 0.0
                          : static_cast<double>(tp + tn) / static_cast<double>(total);
  if (tp + fp == 0) {
    m.degenerate_precision = true;
  } else {
    m.precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
  }
  if (tp + fn == 0) {
    m.degenerate_recall = true;
  } else {
    m.recall = static_cast<double>(tp) / static_cast<double>(tp + fn);
  }
  if (m.precision + m.recall > 0.0) {
    m.f1 = 2.0 * m.precision * m.recall / (m.precision + m.recall);
  }
  return m;
}

ClassificationMetrics evaluate(const ClassifierModel& model,
                               std::span<const TrainExample> test_set) {
  if (test_set.empty()) {
    throw Error(ErrorKind::Domain, "empty test set");
  }
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
  for (const auto& ex : test_set) {
    const bool predicted =
        classify(model, ex.features).label == sensor::Label::Infested;
    if (predicted && ex.infested) ++tp;
    else if (predicted && !ex.infested) ++fp;
    else if (!predicted && !ex.infested) ++tn;
    else ++fn;
  }
  return metrics_from_counts(tp, fp, tn, fn);
}

ClassificationMetrics evaluate_score_pairs(
    std::span<const std::pair<double, bool>> scored) {
  if (scored.empty()) throw Error(ErrorKind::Domain, "empty score set");
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
  for (const auto& [score, truth] : scored) {
    const bool predicted = score >= 0.5;
    if (predicted && truth) ++tp;
    else if (predicted && !truth) ++fp;
    else if (!predicted && !truth) ++tn;
    else ++fn;
  }
  return metrics_from_counts(tp, fp, tn, fn);
}

void save_model(const std::filesystem::path& path, const ClassifierModel& m) {
  json doc;
  doc["version"] = 1;
  doc["kind"] = to_string(m.kind);
  doc["n_features"] = m.n_features;
  doc["feature_mean"] = m.feature_mean;
  doc["feature_std"] = m.feature_std;
  if (m.kind == ModelKind::Logistic) {
    doc["weights"] = m.weights;
    doc["bias"] = m.bias;
  } else {
    doc["centroid_infested"] = m.centroid_infested;
    doc["centroid_not_infested"] = m.centroid_clean;
  }
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::Io, "cannot write " + path.string());
  out << doc.dump(2) << "\n";
}

ClassifierModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + path.string());
  json doc;
  try {
    in >> doc;
  } catch (const json::parse_error& e) {
    throw Error(ErrorKind::Format, std::string("bad model file: ") + e.what());
  }
  ClassifierModel m;
  try {
    if (doc.value("version", 0) != 1) {
      throw Error(ErrorKind::Format, "unsupported model file version");
    }
    m.kind = parse_model_kind(doc.at("kind").get<std::string>());
    m.n_features = doc.at("n_features").get<std::size_t>();
    m.feature_mean = doc.at("feature_mean").get<std::vector<double>>();
    m.feature_std = doc.at("feature_std").get<std::vector<double>>();
    if (m.kind == ModelKind::Logistic) {
      m.weights = doc.at("weights").get<std::vector<double>>();
      m.bias = doc.at("bias").get<double>();
    } else {
      m.centroid_infested = doc.at("centroid_infested").get<std::vector<double>>();
      m.centroid_clean = doc.at("centroid_not_infested").get<std::vector<double>>();
    }
  } catch (const json::exception& e) {
    throw Error(ErrorKind::Format, std::string("bad model file: ") + e.what());
  }
  if (m.kind == ModelKind::Logistic) {
    if (m.weights.size() != m.n_features) {
      throw Error(ErrorKind::Validation, "weight dimensionality mismatch");
    }
  } else if (m.centroid_infested.size() != m.n_features ||
             m.centroid_clean.size() != m.n_features) {
    throw Error(ErrorKind::Validation, "centroid dimensionality mismatch");
  }
  if (m.feature_mean.size() != m.n_features ||
      m.feature_std.size() != m.n_features) {
    throw Error(ErrorKind::Validation, "normalization stats dimensionality mismatch");
  }
  return m;
}

std::vector<std::pair<std::string, double>> load_scores_csv(
    const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line) ||
      line.find("record_id,score") == std::string::npos) {
    throw Error(ErrorKind::Format, "scores file must start with record_id,score");
  }
  std::vector<std::pair<std::string, double>> scores;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto pos = line.find_last_of(',');
    if (pos == std::string::npos) {
      throw Error(ErrorKind::Format,
                  "scores line " + std::to_string(line_no) + ": expected record_id,score");
    }
    const std::string id = line.substr(0, pos);
    const std::string text = line.substr(pos + 1);
    double score = 0.0;
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), score);
    if (ec != std::errc() || ptr != text.data() + text.size()) {
      throw Error(ErrorKind::Validation,
                  "scores line " + std::to_string(line_no) + ": bad score " + text);
    }
    if (score < 0.0 || score > 1.0) {
      throw Error(ErrorKind::Validation,
                  "scores line " + std::to_string(line_no) + ": score outside [0,1]");
    }
    scores.emplace_back(id, score);
  }
  return scores;
}

void save_metrics(const std::filesystem::path& path,
                  const ClassificationMetrics& metrics) {
  json doc;
  doc["accuracy"] = metrics.accuracy;
  doc["precision"] = metrics.precision;
  doc["recall"] = metrics.recall;
  doc["f1"] = metrics.f1;
  doc["confusion"] = {{"tp", metrics.tp},
                      {"fp", metrics.fp},
                      {"tn", metrics.tn},
                      {"fn", metrics.fn}};
  doc["degenerate_precision"] = metrics.degenerate_precision;
  doc["degenerate_recall"] = metrics.degenerate_recall;
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::Io, "cannot write " + path.string());
  out << doc.dump(2) << "\n";
}

}  // namespace ww::classify
