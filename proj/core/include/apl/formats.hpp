#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "apl/evalsuite.hpp"
#include "apl/geometry.hpp"
#include "apl/matrix.hpp"
#include "apl/quality.hpp"
#include "apl/selection.hpp"

namespace apl {

// Canonical JSON emitter: insertion-order keys, two-space indentation, all
// reals at six decimals (negative zero normalized). Writing the same data
// twice yields byte-identical text, which the round-trip contracts rely on.
class JsonWriter {
 public:
  JsonWriter& begin_object();
  JsonWriter& end_object();
  JsonWriter& begin_array();
  JsonWriter& end_array();
  JsonWriter& key(const std::string& name);
  JsonWriter& value(const std::string& v);
  JsonWriter& value(const char* v);
  JsonWriter& value(double v);
  JsonWriter& value(std::int64_t v);
  JsonWriter& value(std::uint64_t v);
  JsonWriter& value(bool v);
  JsonWriter& null();

  const std::string& str() const { return out_; }

  static std::string format_real(double v);

 private:
  void prefix();
  std::string out_;
  // one flag per open container: whether it already holds an element
  std::vector<bool> has_element_;
  bool pending_key_ = false;
};

struct VideoAnnotation {
  Segment segment;
  std::string label;
};

struct VideoRecord {
  double duration = 0.0;
  double fps = 1.0;
  std::vector<VideoAnnotation> annotations;
};

// ActivityNet-style ground-truth container.
struct AnnotationFile {
  std::vector<std::string> classes;
  std::map<std::string, VideoRecord> videos;
};

AnnotationFile read_annotations(const std::string& path);
void write_annotations(const AnnotationFile& file, const std::string& path);

// Frame features, binary: magic "APLF", u32 D, u32 T (little-endian), then
// T x D little-endian 32-bit floats, frame-major. Returns D x T.
Matrix read_features(const std::string& path);
void write_features(const Matrix& features, const std::string& path);

// Per-frame predictions, binary: magic "APLP", u32 K, u32 T, then 32-bit
// little-endian floats: cls (K x T row-major), tiou_hat (T), tnd_hat (T),
// offsets (2 x T row-major).
FramePredictions read_predictions(const std::string& path);
void write_predictions(const FramePredictions& preds, const std::string& path);

// Tiers plus thresholds and refinement log for a set of videos, JSON.
struct PseudoLabelFile {
  std::vector<std::string> classes;
  std::map<std::string, PseudoLabelSet> videos;
};

PseudoLabelFile read_pseudo_labels(const std::string& path);
void write_pseudo_labels(const PseudoLabelFile& file, const std::string& path);

// "threshold,class,ap" rows, one per (threshold, class) pair.
void write_ap_csv(const MeanApResult& result,
                  const std::vector<std::string>& class_names,
                  const std::string& path);

// {"map": {threshold: mean ap}, "avg": ..., "quality": {...}}
void write_eval_json(const MeanApResult& result, const QualityReport& quality,
                     const std::string& path);

}  // namespace apl
