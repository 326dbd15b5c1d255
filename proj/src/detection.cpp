// Copyright 2026 WeevilWatch contributors. Licensed under the Apache-2.0 license.

#include "ww/detection.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

#include "ww/error.hpp"

namespace ww::detect {
namespace {

double bce(double p, double target) {
  const double eps = 1e-12;
  const double q = std::clamp(p, eps, 1.0 - eps);
  return -(target * std::log(q) + (1.0 - target) * std::log(1.0 - q));
}

double parse_double_token(const std::string& token, const char* what) {
  double value = 0.0;
  const char* begin = token.data();
  const char* end = begin + token.size();
  auto [ptr, ec] = std::from_chars(begin, end, value);
  if (ec != std::errc() || ptr != end || !std::isfinite(value)) {
    throw Error(ErrorKind::Validation,
                std::string(what) + " is not a finite number: '" + token + "'");
  }
  return value;
}

std::vector<std::string> split_ws(const std::string& line) {
  std::vector<std::string> tokens;
  std::istringstream in(line);
  std::string token;
  while (in >> token) tokens.push_back(token);
  return tokens;
}

BoundingBox parse_box(const std::vector<std::string>& tokens, std::size_t first) {
  BoundingBox box{parse_double_token(tokens[first], "x1"),
                  parse_double_token(tokens[first + 1], "y1"),
                  parse_double_token(tokens[first + 2], "x2"),
                  parse_double_token(tokens[first + 3], "y2")};
  if (!box.valid()) {
    throw Error(ErrorKind::Validation, "box corners must satisfy x1 < x2 and y1 < y2");
  }
  return box;
}

struct MatchOutcome {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t truth_count = 0;
};

// Greedy matcher shared by AP and the operating-point metrics: detections in
// descending confidence claim the unmatched same-image truth of the same
// class with the highest IoU at or above the threshold.
MatchOutcome greedy_match(std::span<const Detection> detections,
                          std::span<const GroundTruth> truths,
                          ObjectClass class_id, double iou_threshold,
                          std::vector<bool>* tp_flags) {
  std::vector<std::size_t> det_idx;
  for (std::size_t i = 0; i < detections.size(); ++i) {
    if (detections[i].class_id == class_id) det_idx.push_back(i);
  }
  std::stable_sort(det_idx.begin(), det_idx.end(), [&](std::size_t a, std::size_t b) {
    return detections[a].confidence > detections[b].confidence;
  });

  std::vector<std::size_t> truth_idx;
  for (std::size_t i = 0; i < truths.size(); ++i) {
    if (truths[i].class_id == class_id) truth_idx.push_back(i);
  }
  std::vector<bool> claimed(truth_idx.size(), false);

  MatchOutcome out;
  out.truth_count = truth_idx.size();
  if (tp_flags) tp_flags->assign(det_idx.size(), false);

  for (std::size_t rank = 0; rank < det_idx.size(); ++rank) {
    const Detection& det = detections[det_idx[rank]];
    double best_iou = -1.0;
    std::size_t best = truth_idx.size();
    for (std::size_t j = 0; j < truth_idx.size(); ++j) {
      if (claimed[j]) continue;
      const GroundTruth& truth = truths[truth_idx[j]];
      if (truth.image_id != det.image_id) continue;
      const double overlap = iou(det.box, truth.box);
      if (overlap > best_iou) {
        best_iou = overlap;
        best = j;
      }
    }
    if (best < truth_idx.size() && best_iou >= iou_threshold) {
      claimed[best] = true;
      ++out.tp;
      if (tp_flags) (*tp_flags)[rank] = true;
    } else {
      ++out.fp;
    }
  }
  return out;
}

}  // namespace

const char* to_string(ObjectClass cls) {
  return cls == ObjectClass::Palm ? "palm" : "tree";
}

ObjectClass parse_object_class(const std::string& token) {
  if (token == "palm") return ObjectClass::Palm;
  if (token == "tree") return ObjectClass::Tree;
  throw Error(ErrorKind::Validation, "unknown object class '" + token + "'");
}

double sigmoid(double net) { return 1.0 / (1.0 + std::exp(-net)); }

double iou(const BoundingBox& a, const BoundingBox& b) {
  if (!a.valid() || !b.valid()) {
    throw Error(ErrorKind::Domain, "IoU requires boxes with positive area");
  }
  const double ix1 = std::max(a.x1, b.x1);
  const double iy1 = std::max(a.y1, b.y1);
  const double ix2 = std::min(a.x2, b.x2);
  const double iy2 = std::min(a.y2, b.y2);
  const double iw = ix2 - ix1;
  const double ih = iy2 - iy1;
  if (iw <= 0.0 || ih <= 0.0) return 0.0;
  const double inter = iw * ih;
  return inter / (a.area() + b.area() - inter);
}

double alignment_score(double classification_score, double iou_value,
                       const AlignmentParams& params) {
  if (classification_score < 0.0 || classification_score > 1.0 ||
      iou_value < 0.0 || iou_value > 1.0) {
    throw Error(ErrorKind::Domain, "alignment inputs must lie in [0, 1]");
  }
  if (!std::isfinite(params.alpha) || !std::isfinite(params.beta)) {
    throw Error(ErrorKind::Domain, "alignment exponents must be finite");
  }
  auto pow01 = [](double base, double exp) {
    if (exp == 0.0) return 1.0;  // 0^0 = 1 by convention here
    return std::pow(base, exp);
  };
  return pow01(classification_score, params.alpha) * pow01(iou_value, params.beta);
}

AnchorAssignment assign_anchors(
    std::span<const std::pair<double, double>> score_iou_pairs,
    const AlignmentParams& params) {
  std::vector<double> scores(score_iou_pairs.size());
  for (std::size_t i = 0; i < score_iou_pairs.size(); ++i) {
    scores[i] = alignment_score(score_iou_pairs[i].first,
                                score_iou_pairs[i].second, params);
  }
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return scores[a] > scores[b];
  });

  AnchorAssignment out;
  const std::size_t m = std::min(params.positive_count, order.size());
  out.positives.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(m));
  out.negatives.assign(order.begin() + static_cast<std::ptrdiff_t>(m), order.end());
  std::sort(out.positives.begin(), out.positives.end());
  std::sort(out.negatives.begin(), out.negatives.end());
  return out;
}

LossPair make_loss_pair(const Detection& det, const GroundTruth& truth) {
  return LossPair{iou(det.box, truth.box), det.class_id == truth.class_id,
                  det.confidence, det.confidence};
}

LossBreakdown composite_loss(std::span<const LossPair> matched,
                             std::span<const double> unmatched_confidences,
                             std::size_t unmatched_truth_count) {
  LossBreakdown out;
  if (matched.empty() && unmatched_confidences.empty() &&
      unmatched_truth_count == 0) {
    out.empty = true;
    return out;
  }
  for (const LossPair& pair : matched) {
    if (pair.iou < 0.0 || pair.iou > 1.0 || pair.class_prob < 0.0 ||
        pair.class_prob > 1.0 || pair.confidence < 0.0 || pair.confidence > 1.0) {
      throw Error(ErrorKind::Domain, "loss inputs must lie in [0, 1]");
    }
  }
  for (double conf : unmatched_confidences) {
    if (conf < 0.0 || conf > 1.0) {
      throw Error(ErrorKind::Domain, "loss inputs must lie in [0, 1]");
    }
  }

  double cls_sum = 0.0, loc_sum = 0.0, conf_sum = 0.0;
  for (const LossPair& pair : matched) {
    cls_sum += bce(pair.class_prob, pair.class_match ? 1.0 : 0.0);
    loc_sum += 1.0 - pair.iou;
    conf_sum += bce(pair.confidence, 1.0);
  }
  for (double conf : unmatched_confidences) conf_sum += bce(conf, 0.0);

  if (!matched.empty()) {
    out.classification = cls_sum / static_cast<double>(matched.size());
    out.localization = loc_sum / static_cast<double>(matched.size());
  }
  const std::size_t det_count = matched.size() + unmatched_confidences.size();
  if (det_count > 0) out.confidence = conf_sum / static_cast<double>(det_count);
  out.total = out.classification + out.localization + out.confidence;
  return out;
}

std::vector<Detection> nms(std::span<const Detection> detections,
                           double conf_threshold, double iou_threshold) {
  if (!(conf_threshold >= 0.0 && conf_threshold <= 1.0) ||
      !(iou_threshold >= 0.0 && iou_threshold <= 1.0)) {
    throw Error(ErrorKind::Domain, "NMS thresholds must lie in [0, 1]");
  }
  std::vector<std::size_t> order;
  for (std::size_t i = 0; i < detections.size(); ++i) {
    const Detection& det = detections[i];
    if (!det.box.valid()) {
      throw Error(ErrorKind::Validation, "NMS input box must have positive area");
    }
    if (det.confidence < 0.0 || det.confidence > 1.0) {
      throw Error(ErrorKind::Validation, "NMS confidence must lie in [0, 1]");
    }
    if (det.confidence >= conf_threshold) order.push_back(i);
  }
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return detections[a].confidence > detections[b].confidence;
  });

  std::vector<Detection> kept;
  for (std::size_t idx : order) {
    const Detection& cand = detections[idx];
    bool suppressed = false;
    for (const Detection& winner : kept) {
      if (winner.class_id != cand.class_id) continue;
      if (winner.image_id != cand.image_id) continue;
      if (iou(winner.box, cand.box) > iou_threshold) {
        suppressed = true;
        break;
      }
    }
    if (!suppressed) kept.push_back(cand);
  }
  return kept;
}

LetterboxTransform LetterboxTransform::fit(std::size_t network_size,
                                           double original_w, double original_h) {
  if (network_size == 0 || !(original_w > 0.0) || !(original_h > 0.0)) {
    throw Error(ErrorKind::Domain, "letterbox needs positive image and network sizes");
  }
  LetterboxTransform t;
  t.network_size = network_size;
  t.original_w = original_w;
  t.original_h = original_h;
  const double net = static_cast<double>(network_size);
  t.scale = std::min(net / original_w, net / original_h);
  t.pad_x = (net - t.scale * original_w) / 2.0;
  t.pad_y = (net - t.scale * original_h) / 2.0;
  return t;
}

std::optional<BoundingBox> letterbox_to_original(const BoundingBox& box,
                                                 const LetterboxTransform& t) {
  auto unmap_x = [&](double x) {
    return std::clamp((x - t.pad_x) / t.scale, 0.0, t.original_w);
  };
  auto unmap_y = [&](double y) {
    return std::clamp((y - t.pad_y) / t.scale, 0.0, t.original_h);
  };
  BoundingBox out{unmap_x(box.x1), unmap_y(box.y1), unmap_x(box.x2), unmap_y(box.y2)};
  if (!out.valid()) return std::nullopt;  // clamped away entirely
  return out;
}

BoundingBox original_to_letterbox(const BoundingBox& box,
                                  const LetterboxTransform& t) {
  return BoundingBox{box.x1 * t.scale + t.pad_x, box.y1 * t.scale + t.pad_y,
                     box.x2 * t.scale + t.pad_x, box.y2 * t.scale + t.pad_y};
}

GridScales grid_scales(std::size_t network_size) {
  if (network_size == 0 || network_size % 64 != 0) {
    throw Error(ErrorKind::Domain, "network size must be a positive multiple of 64");
  }
  GridScales out;
  out.grids = {std::pair{network_size / 16, network_size / 16},
               std::pair{network_size / 32, network_size / 32},
               std::pair{network_size / 64, network_size / 64}};
  out.boxes_per_cell = 3;
  return out;
}

double average_precision(std::span<const Detection> detections,
                         std::span<const GroundTruth> truths,
                         ObjectClass class_id, double iou_threshold) {
  std::vector<bool> tp_flags;
  const MatchOutcome outcome =
      greedy_match(detections, truths, class_id, iou_threshold, &tp_flags);
  if (outcome.truth_count == 0) return 0.0;
  if (tp_flags.empty()) return 0.0;

  const double n_truth = static_cast<double>(outcome.truth_count);
  std::vector<double> recall(tp_flags.size());
  std::vector<double> precision(tp_flags.size());
  std::size_t tp = 0;
  for (std::size_t i = 0; i < tp_flags.size(); ++i) {
    if (tp_flags[i]) ++tp;
    recall[i] = static_cast<double>(tp) / n_truth;
    precision[i] = static_cast<double>(tp) / static_cast<double>(i + 1);
  }

  // Non-increasing precision envelope, integrated over recall.
  for (std::size_t i = precision.size() - 1; i > 0; --i) {
    precision[i - 1] = std::max(precision[i - 1], precision[i]);
  }
  double ap = 0.0;
  double prev_recall = 0.0;
  for (std::size_t i = 0; i < recall.size(); ++i) {
    ap += (recall[i] - prev_recall) * precision[i];
    prev_recall = recall[i];
  }
  return ap;
}

EvalReport evaluate_detections(std::span<const Detection> detections,
                               std::span<const GroundTruth> truths,
                               std::span<const double> iou_thresholds,
                               double operating_confidence) {
  if (iou_thresholds.empty()) {
    throw Error(ErrorKind::Domain, "at least one IoU threshold is required");
  }
  if (operating_confidence < 0.0 || operating_confidence > 1.0) {
    throw Error(ErrorKind::Domain, "operating confidence must lie in [0, 1]");
  }
  for (const Detection& det : detections) {
    if (!det.box.valid() || det.confidence < 0.0 || det.confidence > 1.0) {
      throw Error(ErrorKind::Validation, "detection box or confidence out of range");
    }
  }
  for (const GroundTruth& truth : truths) {
    if (!truth.box.valid()) {
      throw Error(ErrorKind::Validation, "ground-truth box must have positive area");
    }
  }

  EvalReport report;
  report.operating_confidence = operating_confidence;

  for (ObjectClass cls : {ObjectClass::Palm, ObjectClass::Tree}) {
    const bool has_truth = std::any_of(
        truths.begin(), truths.end(),
        [&](const GroundTruth& t) { return t.class_id == cls; });
    const bool has_det = std::any_of(
        detections.begin(), detections.end(),
        [&](const Detection& d) { return d.class_id == cls; });
    if (!has_truth && !has_det) continue;

    ClassAp entry;
    entry.class_id = cls;
    entry.degenerate = has_det && !has_truth;
    if (has_truth) {
      double sum = 0.0;
      for (double threshold : iou_thresholds) {
        const double ap = average_precision(detections, truths, cls, threshold);
        sum += ap;
        if (threshold == iou_thresholds.front()) entry.ap50 = ap;
      }
      entry.ap50_95 = sum / static_cast<double>(iou_thresholds.size());
    }
    report.per_class.push_back(entry);
  }

  double map50_sum = 0.0, map_sum = 0.0;
  std::size_t contributing = 0;
  for (const ClassAp& entry : report.per_class) {
    if (entry.degenerate) continue;  // no truths for this class
    map50_sum += entry.ap50;
    map_sum += entry.ap50_95;
    ++contributing;
  }
  if (contributing > 0) {
    report.map50 = map50_sum / static_cast<double>(contributing);
    report.map50_95 = map_sum / static_cast<double>(contributing);
  } else {
    report.degenerate = true;
  }

  // Operating point: confidence-filtered micro precision/recall at the first
  // (lowest) IoU threshold.
  std::vector<Detection> operating;
  for (const Detection& det : detections) {
    if (det.confidence >= operating_confidence) operating.push_back(det);
  }
  std::size_t tp = 0, fp = 0, truth_total = truths.size();
  for (ObjectClass cls : {ObjectClass::Palm, ObjectClass::Tree}) {
    const MatchOutcome outcome =
        greedy_match(operating, truths, cls, iou_thresholds.front(), nullptr);
    tp += outcome.tp;
    fp += outcome.fp;
  }
  report.precision =
      (tp + fp) > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
  report.recall =
      truth_total > 0 ? static_cast<double>(tp) / static_cast<double>(truth_total) : 0.0;
  return report;
}

EvalReport evaluate_detections(std::span<const Detection> detections,
                               std::span<const GroundTruth> truths,
                               double operating_confidence) {
  return evaluate_detections(detections, truths,
                             std::span<const double>(kCocoIouThresholds),
                             operating_confidence);
}

const char* to_string(CoordinateSpace space) {
  return space == CoordinateSpace::Network ? "network" : "original";
}

namespace {

CoordinateSpace parse_space_header(const std::string& line) {
  if (line == "space=network") return CoordinateSpace::Network;
  if (line == "space=original") return CoordinateSpace::Original;
  throw Error(ErrorKind::Format,
              "expected header 'space=network' or 'space=original', got '" + line + "'");
}

std::vector<std::string> read_content_lines(const std::filesystem::path& path,
                                            std::vector<std::size_t>* numbers) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + path.string());
  std::vector<std::string> lines;
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    lines.push_back(line);
    if (numbers) numbers->push_back(number);
  }
  return lines;
}

}  // namespace

DetectionFile load_detections(const std::filesystem::path& path) {
  std::vector<std::size_t> numbers;
  std::vector<std::string> lines = read_content_lines(path, &numbers);
  if (lines.empty()) {
    throw Error(ErrorKind::Format, "detection file has no space header: " + path.string());
  }

  DetectionFile out;
  out.space = parse_space_header(lines.front());
  std::vector<std::string> problems;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    try {
      const std::vector<std::string> tokens = split_ws(lines[i]);
      if (tokens.size() != 7) {
        throw Error(ErrorKind::Validation,
                    "expected 'image_id class confidence x1 y1 x2 y2'");
      }
      Detection det;
      det.image_id = tokens[0];
      det.class_id = parse_object_class(tokens[1]);
      det.confidence = parse_double_token(tokens[2], "confidence");
      if (det.confidence < 0.0 || det.confidence > 1.0) {
        throw Error(ErrorKind::Validation, "confidence must lie in [0, 1]");
      }
      det.box = parse_box(tokens, 3);
      out.detections.push_back(std::move(det));
    } catch (const Error& err) {
      problems.push_back("line " + std::to_string(numbers[i]) + ": " + err.what());
    }
  }
  if (!problems.empty()) {
    std::string joined;
    for (const std::string& p : problems) {
      if (!joined.empty()) joined += "; ";
      joined += p;
    }
    throw Error(ErrorKind::Validation, path.string() + ": " + joined);
  }
  return out;
}

std::vector<GroundTruth> load_truths(const std::filesystem::path& path) {
  std::vector<std::size_t> numbers;
  std::vector<std::string> lines = read_content_lines(path, &numbers);
  std::vector<GroundTruth> out;
  std::vector<std::string> problems;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (i == 0 && lines[i].rfind("space=", 0) == 0) {
      parse_space_header(lines[i]);  // validated but not used for truths
      continue;
    }
    try {
      const std::vector<std::string> tokens = split_ws(lines[i]);
      if (tokens.size() != 6) {
        throw Error(ErrorKind::Validation, "expected 'image_id class x1 y1 x2 y2'");
      }
      GroundTruth truth;
      truth.image_id = tokens[0];
      truth.class_id = parse_object_class(tokens[1]);
      truth.box = parse_box(tokens, 2);
      out.push_back(std::move(truth));
    } catch (const Error& err) {
      problems.push_back("line " + std::to_string(numbers[i]) + ": " + err.what());
    }
  }
  if (!problems.empty()) {
    std::string joined;
    for (const std::string& p : problems) {
      if (!joined.empty()) joined += "; ";
      joined += p;
    }
    throw Error(ErrorKind::Validation, path.string() + ": " + joined);
  }
  return out;
}

void save_detections(const std::filesystem::path& path, CoordinateSpace space,
                     std::span<const Detection> detections) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::Io, "cannot write " + path.string());
  out.precision(17);
  out << "space=" << to_string(space) << "\n";
  for (const Detection& det : detections) {
    out << det.image_id << ' ' << to_string(det.class_id) << ' ' << det.confidence
        << ' ' << det.box.x1 << ' ' << det.box.y1 << ' ' << det.box.x2 << ' '
        << det.box.y2 << "\n";
  }
  if (!out) throw Error(ErrorKind::Io, "failed writing " + path.string());
}

void save_eval_report(const std::filesystem::path& path, const EvalReport& report) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::Io, "cannot write " + path.string());
  out.precision(17);
  out << "{\n";
  out << "  \"precision\": " << report.precision << ",\n";
  out << "  \"recall\": " << report.recall << ",\n";
  out << "  \"map50\": " << report.map50 << ",\n";
  out << "  \"map50_95\": " << report.map50_95 << ",\n";
  out << "  \"operating_confidence\": " << report.operating_confidence << ",\n";
  out << "  \"degenerate\": " << (report.degenerate ? "true" : "false") << ",\n";
  out << "  \"per_class\": {";
  for (std::size_t i = 0; i < report.per_class.size(); ++i) {
    const ClassAp& entry = report.per_class[i];
    if (i > 0) out << ",";
    out << "\n    \"" << to_string(entry.class_id) << "\": {\"ap50\": " << entry.ap50
        << ", \"ap50_95\": " << entry.ap50_95 << ", \"degenerate\": "
        << (entry.degenerate ? "true" : "false") << "}";
  }
  if (!report.per_class.empty()) out << "\n  ";
  out << "}\n}\n";
  if (!out) throw Error(ErrorKind::Io, "failed writing " + path.string());
}

}  // namespace ww::detect
