// Copyright 2026 WeevilWatch contributors. Licensed under the Apache-2.0 license.

#ifndef WW_DETECTION_HPP
#define WW_DETECTION_HPP

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace ww::detect {

/// Axis-aligned pixel box, origin top-left, x1 < x2 and y1 < y2.
struct BoundingBox {
  double x1 = 0.0, y1 = 0.0, x2 = 0.0, y2 = 0.0;

  double width() const { return x2 - x1; }
  double height() const { return y2 - y1; }
  double area() const { return width() * height(); }
  bool valid() const { return x2 > x1 && y2 > y1; }
};

enum class ObjectClass { Palm, Tree };

const char* to_string(ObjectClass cls);
ObjectClass parse_object_class(const std::string& token);

struct Detection {
  BoundingBox box;
  ObjectClass class_id = ObjectClass::Palm;
  double confidence = 0.0;
  std::string image_id;
};

struct GroundTruth {
  BoundingBox box;
  ObjectClass class_id = ObjectClass::Palm;
  std::string image_id;
};

double sigmoid(double net);

/// Intersection over union; 0 for disjoint boxes.
double iou(const BoundingBox& a, const BoundingBox& b);

/// Anchor-alignment weighting.
struct AlignmentParams {
  double alpha = 1.0;
  double beta = 6.0;
  std::size_t positive_count = 10;  // m, anchors kept as positive
};

/// t = s^alpha * u^beta with 0^0 = 1. Inputs are probabilities in [0,1].
double alignment_score(double classification_score, double iou_value,
                       const AlignmentParams& params);

struct AnchorAssignment {
  std::vector<std::size_t> positives;
  std::vector<std::size_t> negatives;
};

/// Keeps the m candidates with the largest alignment score as positives
/// (ties resolved toward the lower index); the rest are negatives.
AnchorAssignment assign_anchors(
    std::span<const std::pair<double, double>> score_iou_pairs,
    const AlignmentParams& params);

/// One matched detection/truth pair as the loss sees it.
struct LossPair {
  double iou = 0.0;
  bool class_match = true;
  double class_prob = 0.0;   // probability the detection put on its class
  double confidence = 0.0;
};

LossPair make_loss_pair(const Detection& det, const GroundTruth& truth);

struct LossBreakdown {
  double classification = 0.0;  // mean BCE of class prob vs one-hot truth
  double localization = 0.0;    // mean (1 - IoU)
  double confidence = 0.0;      // mean BCE of confidence vs match indicator
  double total = 0.0;
  bool empty = false;
};

/// Unit-weight sum of the three loss terms. The confidence term averages
/// over matched and unmatched detections together.
LossBreakdown composite_loss(std::span<const LossPair> matched,
                             std::span<const double> unmatched_confidences,
                             std::size_t unmatched_truth_count);

/// Class-aware greedy NMS. Detections below conf_threshold are dropped;
/// among the rest, higher confidence wins and same-class boxes overlapping a
/// kept box with IoU > iou_threshold are suppressed. Confidence ties break
/// toward the lower input index. Output is sorted by descending confidence.
std::vector<Detection> nms(std::span<const Detection> detections,
                           double conf_threshold, double iou_threshold);

/// Aspect-preserving resize onto a square network canvas with centered pads.
struct LetterboxTransform {
  double scale = 1.0;
  double pad_x = 0.0;
  double pad_y = 0.0;
  std::size_t network_size = 0;
  double original_w = 0.0;
  double original_h = 0.0;

  static LetterboxTransform fit(std::size_t network_size, double original_w,
                                double original_h);
};

/// Maps a network-canvas box back to original image pixels, clamped to the
/// image. Returns nullopt when clamping collapses the box to zero area.
std::optional<BoundingBox> letterbox_to_original(const BoundingBox& box,
                                                 const LetterboxTransform& t);

BoundingBox original_to_letterbox(const BoundingBox& box,
                                  const LetterboxTransform& t);

struct GridScales {
  std::array<std::pair<std::size_t, std::size_t>, 3> grids;  // (w, h) each
  std::size_t boxes_per_cell = 3;
};

/// Feature-map grids at strides 16/32/64; network_size must divide by 64.
GridScales grid_scales(std::size_t network_size);

struct ClassAp {
  ObjectClass class_id = ObjectClass::Palm;
  double ap50 = 0.0;
  double ap50_95 = 0.0;
  bool degenerate = false;  // detections present but no truths
};

struct EvalReport {
  double precision = 0.0;  // micro-averaged at IoU 0.5, operating confidence
  double recall = 0.0;
  double map50 = 0.0;
  double map50_95 = 0.0;
  std::vector<ClassAp> per_class;
  double operating_confidence = 0.0;
  bool degenerate = false;  // no ground truths at all
};

inline constexpr std::array<double, 10> kCocoIouThresholds = {
    0.50, 0.55, 0.60, 0.65, 0.70, 0.75, 0.80, 0.85, 0.90, 0.95};

/// Average precision for one class at one IoU threshold: detections sorted by
/// descending confidence (ties to the lower index) are greedily matched to
/// the unmatched same-image truth with the highest IoU >= threshold, and AP
/// is the area under the non-increasing precision envelope.
double average_precision(std::span<const Detection> detections,
                         std::span<const GroundTruth> truths,
                         ObjectClass class_id, double iou_threshold);

EvalReport evaluate_detections(std::span<const Detection> detections,
                               std::span<const GroundTruth> truths,
                               std::span<const double> iou_thresholds,
                               double operating_confidence);

EvalReport evaluate_detections(std::span<const Detection> detections,
                               std::span<const GroundTruth> truths,
                               double operating_confidence);

enum class CoordinateSpace { Network, Original };

const char* to_string(CoordinateSpace space);

struct DetectionFile {
  CoordinateSpace space = CoordinateSpace::Original;
  std::vector<Detection> detections;
};

/// Detection lines `image_id class confidence x1 y1 x2 y2` behind a
/// `space=network|original` header. All line-level violations are reported
/// together.
DetectionFile load_detections(const std::filesystem::path& path);

/// Ground-truth lines `image_id class x1 y1 x2 y2`; the space header is
/// optional and ignored.
std::vector<GroundTruth> load_truths(const std::filesystem::path& path);

void save_detections(const std::filesystem::path& path, CoordinateSpace space,
                     std::span<const Detection> detections);

void save_eval_report(const std::filesystem::path& path, const EvalReport& report);

}  // namespace ww::detect

#endif  // WW_DETECTION_HPP
