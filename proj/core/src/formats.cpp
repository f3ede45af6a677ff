#include "apl/formats.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "apl/errors.hpp"

namespace apl {

namespace {

using nlohmann::json;

std::string escape_json(const std::string& s) {
  std::string out;
  out.reserve(s.size() + 2);
  for (const char c : s) {
    switch (c) {
      case '"': out += "\\\""; break;
      case '\\': out += "\\\\"; break;
      case '\n': out += "\\n"; break;
      case '\r': out += "\\r"; break;
      case '\t': out += "\\t"; break;
      case '\b': out += "\\b"; break;
      case '\f': out += "\\f"; break;
      default:
        if (static_cast<unsigned char>(c) < 0x20) {
          char buf[8];
          std::snprintf(buf, sizeof buf, "\\u%04x", c);
          out += buf;
        } else {
          out += c;
        }
    }
  }
  return out;
}

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open file for writing: " + path);
  out << text;
  if (!out) throw IoError("failed writing file: " + path);
}

json parse_json(const std::string& path) {
  try {
    return json::parse(read_text(path));
  } catch (const json::exception& e) {
    throw IoError(path + ": invalid JSON: " + e.what());
  }
}

const json& require(const json& obj, const char* key, const std::string& ctx) {
  const auto it = obj.find(key);
  if (it == obj.end()) throw IoError(ctx + ": missing key '" + key + "'");
  return *it;
}

void reject_unknown_keys(const json& obj, const std::set<std::string>& known,
                         const std::string& ctx) {
  for (const auto& [k, v] : obj.items()) {
    if (!known.contains(k)) throw IoError(ctx + ": unknown key '" + k + "'");
  }
}

double require_number(const json& obj, const char* key, const std::string& ctx) {
  const json& v = require(obj, key, ctx);
  if (!v.is_number()) throw IoError(ctx + "." + key + ": expected a number");
  return v.get<double>();
}

std::string require_string(const json& obj, const char* key, const std::string& ctx) {
  const json& v = require(obj, key, ctx);
  if (!v.is_string()) throw IoError(ctx + "." + key + ": expected a string");
  return v.get<std::string>();
}

Segment require_segment(const json& obj, const std::string& ctx) {
  const json& v = require(obj, "segment", ctx);
  if (!v.is_array() || v.size() != 2 || !v[0].is_number() || !v[1].is_number()) {
    throw IoError(ctx + ".segment: expected [start, end]");
  }
  try {
    return Segment(v[0].get<double>(), v[1].get<double>());
  } catch (const ComputeError& e) {
    throw IoError(ctx + ".segment: " + e.what());
  }
}

// binary helpers

void put_u32(std::ofstream& out, std::uint32_t v) {
  unsigned char buf[4];
  for (int i = 0; i < 4; ++i) buf[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(buf), 4);
}

void put_f32(std::ofstream& out, double v) {
  const float f = static_cast<float>(v);
  std::uint32_t bits;
  std::memcpy(&bits, &f, sizeof(bits));
  put_u32(out, bits);
}

std::uint32_t get_u32(std::ifstream& in, const std::string& path) {
  unsigned char buf[4];
  if (!in.read(reinterpret_cast<char*>(buf), 4)) {
    throw IoError("truncated file: " + path);
  }
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(buf[i]) << (8 * i);
  return v;
}

double get_f32(std::ifstream& in, const std::string& path) {
  const std::uint32_t bits = get_u32(in, path);
  float f;
  std::memcpy(&f, &bits, sizeof(f));
  return static_cast<double>(f);
}

void check_magic(std::ifstream& in, const char* magic, const std::string& path) {
  char buf[4];
  if (!in.read(buf, 4) || std::memcmp(buf, magic, 4) != 0) {
    throw IoError(path + ": bad magic, expected " + magic);
  }
}

void check_no_trailing(std::ifstream& in, const std::string& path) {
  char extra;
  if (in.read(&extra, 1)) throw IoError("trailing bytes in file: " + path);
}

std::size_t class_index_of(const std::string& label,
                           const std::vector<std::string>& classes,
                           const std::string& ctx) {
  const auto it = std::find(classes.begin(), classes.end(), label);
  if (it == classes.end()) {
    throw IoError(ctx + ": label '" + label + "' not in classes");
  }
  return static_cast<std::size_t>(it - classes.begin());
}

void write_classes(JsonWriter& w, const std::vector<std::string>& classes) {
  w.key("classes").begin_array();
  for (const auto& c : classes) w.value(c);
  w.end_array();
}

std::vector<std::string> read_classes(const json& root, const std::string& path) {
  const json& classes = require(root, "classes", path);
  if (!classes.is_array() || classes.empty()) {
    throw IoError(path + ": classes must be a non-empty array");
  }
  std::vector<std::string> out;
  std::set<std::string> seen;
  for (const auto& c : classes) {
    if (!c.is_string()) throw IoError(path + ": class names must be strings");
    const auto name = c.get<std::string>();
    if (!seen.insert(name).second) {
      throw IoError(path + ": duplicate class '" + name + "'");
    }
    out.push_back(name);
  }
  return out;
}

void write_instance(JsonWriter& w, const Instance& inst,
                    const std::vector<std::string>& classes) {
  if (inst.class_index >= classes.size()) {
    throw ComputeError("instance " + inst.id + " has class index out of range");
  }
  w.begin_object();
  w.key("id").value(inst.id);
  w.key("segment").begin_array().value(inst.segment.start).value(inst.segment.end);
  w.end_array();
  w.key("label").value(classes[inst.class_index]);
  w.key("score").value(inst.score);
  w.end_object();
}

Instance read_instance(const json& obj, const std::vector<std::string>& classes,
                       const std::string& video_id, const std::string& ctx) {
  if (!obj.is_object()) throw IoError(ctx + ": expected an instance object");
  reject_unknown_keys(obj, {"id", "segment", "label", "score"}, ctx);
  Instance inst;
  inst.id = require_string(obj, "id", ctx);
  inst.segment = require_segment(obj, ctx);
  inst.class_index = class_index_of(require_string(obj, "label", ctx), classes, ctx);
  inst.score = require_number(obj, "score", ctx);
  inst.video_id = video_id;
  return inst;
}

}  // namespace

// ---- JsonWriter ----

void JsonWriter::prefix() {
  if (pending_key_) {
    pending_key_ = false;
    return;
  }
  if (has_element_.empty()) return;
  if (has_element_.back()) out_ += ',';
  has_element_.back() = true;
  out_ += '\n';
  out_.append(2 * has_element_.size(), ' ');
}

JsonWriter& JsonWriter::begin_object() {
  prefix();
  out_ += '{';
  has_element_.push_back(false);
  return *this;
}

JsonWriter& JsonWriter::end_object() {
  const bool had = has_element_.back();
  has_element_.pop_back();
  if (had) {
    out_ += '\n';
    out_.append(2 * has_element_.size(), ' ');
  }
  out_ += '}';
  return *this;
}

JsonWriter& JsonWriter::begin_array() {
  prefix();
  out_ += '[';
  has_element_.push_back(false);
  return *this;
}

JsonWriter& JsonWriter::end_array() {
  const bool had = has_element_.back();
  has_element_.pop_back();
  if (had) {
    out_ += '\n';
    out_.append(2 * has_element_.size(), ' ');
  }
  out_ += ']';
  return *this;
}

JsonWriter& JsonWriter::key(const std::string& name) {
  if (has_element_.back()) out_ += ',';
  has_element_.back() = true;
  out_ += '\n';
  out_.append(2 * has_element_.size(), ' ');
  out_ += '"' + escape_json(name) + "\": ";
  pending_key_ = true;
  return *this;
}

JsonWriter& JsonWriter::value(const std::string& v) {
  prefix();
  out_ += '"' + escape_json(v) + '"';
  return *this;
}

JsonWriter& JsonWriter::value(const char* v) { return value(std::string(v)); }

JsonWriter& JsonWriter::value(double v) {
  prefix();
  out_ += format_real(v);
  return *this;
}

JsonWriter& JsonWriter::value(std::int64_t v) {
  prefix();
  out_ += std::to_string(v);
  return *this;
}

JsonWriter& JsonWriter::value(std::uint64_t v) {
  prefix();
  out_ += std::to_string(v);
  return *this;
}

JsonWriter& JsonWriter::value(bool v) {
  prefix();
  out_ += v ? "true" : "false";
  return *this;
}

JsonWriter& JsonWriter::null() {
  prefix();
  out_ += "null";
  return *this;
}

std::string JsonWriter::format_real(double v) {
  if (!std::isfinite(v)) throw ComputeError("cannot serialize a non-finite number");
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  std::string s = buf;
  if (s == "-0.000000") s = "0.000000";
  return s;
}

// ---- annotations ----

AnnotationFile read_annotations(const std::string& path) {
  const json root = parse_json(path);
  if (!root.is_object()) throw IoError(path + ": expected a JSON object");
  reject_unknown_keys(root, {"classes", "videos"}, path);

  AnnotationFile file;
  file.classes = read_classes(root, path);

  const json& videos = require(root, "videos", path);
  if (!videos.is_object()) throw IoError(path + ": videos must be an object");
  for (const auto& [video_id, body] : videos.items()) {
    const std::string ctx = path + ": videos." + video_id;
    if (!body.is_object()) throw IoError(ctx + ": expected an object");
    reject_unknown_keys(body, {"duration", "fps", "annotations"}, ctx);

    VideoRecord rec;
    rec.duration = require_number(body, "duration", ctx);
    rec.fps = require_number(body, "fps", ctx);
    if (!(rec.duration > 0.0)) throw IoError(ctx + ": duration must be positive");
    if (!(rec.fps > 0.0)) throw IoError(ctx + ": fps must be positive");

    const json& anns = require(body, "annotations", ctx);
    if (!anns.is_array()) throw IoError(ctx + ": annotations must be an array");
    for (std::size_t i = 0; i < anns.size(); ++i) {
      const std::string actx = ctx + ".annotations[" + std::to_string(i) + "]";
      if (!anns[i].is_object()) throw IoError(actx + ": expected an object");
      reject_unknown_keys(anns[i], {"segment", "label"}, actx);
      VideoAnnotation ann;
      ann.segment = require_segment(anns[i], actx);
      ann.label = require_string(anns[i], "label", actx);
      class_index_of(ann.label, file.classes, actx);
      rec.annotations.push_back(std::move(ann));
    }
    file.videos.emplace(video_id, std::move(rec));
  }
  return file;
}

void write_annotations(const AnnotationFile& file, const std::string& path) {
  JsonWriter w;
  w.begin_object();
  write_classes(w, file.classes);
  w.key("videos").begin_object();
  for (const auto& [video_id, rec] : file.videos) {
    w.key(video_id).begin_object();
    w.key("duration").value(rec.duration);
    w.key("fps").value(rec.fps);
    w.key("annotations").begin_array();
    for (const auto& ann : rec.annotations) {
      class_index_of(ann.label, file.classes, path);
      w.begin_object();
      w.key("segment").begin_array().value(ann.segment.start).value(ann.segment.end);
      w.end_array();
      w.key("label").value(ann.label);
      w.end_object();
    }
    w.end_array();
    w.end_object();
  }
  w.end_object();
  w.end_object();
  write_text(path, w.str() + "\n");
}

// ---- features ----

Matrix read_features(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open file: " + path);
  check_magic(in, "APLF", path);
  const std::uint32_t d = get_u32(in, path);
  const std::uint32_t t = get_u32(in, path);
  if (d == 0 || t == 0) throw IoError(path + ": empty feature matrix");
  Matrix features(d, t);
  for (std::uint32_t frame = 0; frame < t; ++frame) {
    for (std::uint32_t dim = 0; dim < d; ++dim) {
      features(dim, frame) = get_f32(in, path);
    }
  }
  check_no_trailing(in, path);
  return features;
}

void write_features(const Matrix& features, const std::string& path) {
  if (features.empty()) throw ComputeError("refusing to write an empty feature matrix");
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open file for writing: " + path);
  out.write("APLF", 4);
  put_u32(out, static_cast<std::uint32_t>(features.rows()));
  put_u32(out, static_cast<std::uint32_t>(features.cols()));
  for (std::size_t frame = 0; frame < features.cols(); ++frame) {
    for (std::size_t dim = 0; dim < features.rows(); ++dim) {
      put_f32(out, features(dim, frame));
    }
  }
  if (!out) throw IoError("failed writing file: " + path);
}

// ---- predictions ----

FramePredictions read_predictions(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open file: " + path);
  check_magic(in, "APLP", path);
  const std::uint32_t k = get_u32(in, path);
  const std::uint32_t t = get_u32(in, path);
  if (k == 0 || t == 0) throw IoError(path + ": empty prediction tensor");

  FramePredictions preds;
  preds.cls = Matrix(k, t);
  for (double& v : preds.cls.data()) v = get_f32(in, path);
  preds.tiou_hat.resize(t);
  for (double& v : preds.tiou_hat) v = get_f32(in, path);
  preds.tnd_hat.resize(t);
  for (double& v : preds.tnd_hat) v = get_f32(in, path);
  preds.offsets = Matrix(2, t);
  for (double& v : preds.offsets.data()) v = get_f32(in, path);
  check_no_trailing(in, path);
  return preds;
}

void write_predictions(const FramePredictions& preds, const std::string& path) {
  validate(preds);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open file for writing: " + path);
  out.write("APLP", 4);
  put_u32(out, static_cast<std::uint32_t>(preds.n_classes()));
  put_u32(out, static_cast<std::uint32_t>(preds.n_frames()));
  for (double v : preds.cls.data()) put_f32(out, v);
  for (double v : preds.tiou_hat) put_f32(out, v);
  for (double v : preds.tnd_hat) put_f32(out, v);
  for (double v : preds.offsets.data()) put_f32(out, v);
  if (!out) throw IoError("failed writing file: " + path);
}

// ---- pseudo labels ----

PseudoLabelFile read_pseudo_labels(const std::string& path) {
  const json root = parse_json(path);
  if (!root.is_object()) throw IoError(path + ": expected a JSON object");
  reject_unknown_keys(root, {"classes", "videos"}, path);

  PseudoLabelFile file;
  file.classes = read_classes(root, path);

  const json& videos = require(root, "videos", path);
  if (!videos.is_object()) throw IoError(path + ": videos must be an object");
  for (const auto& [video_id, body] : videos.items()) {
    const std::string ctx = path + ": videos." + video_id;
    if (!body.is_object()) throw IoError(ctx + ": expected an object");
    reject_unknown_keys(body,
                        {"tau_pos", "tau_neg", "no_survivors", "positives",
                         "candidates", "rejected", "refinement_log"},
                        ctx);

    PseudoLabelSet set;
    set.tau_pos = require_number(body, "tau_pos", ctx);
    set.tau_neg = require_number(body, "tau_neg", ctx);
    const json& ns = require(body, "no_survivors", ctx);
    if (!ns.is_boolean()) throw IoError(ctx + ".no_survivors: expected a boolean");
    set.no_survivors = ns.get<bool>();

    const auto read_tier = [&](const char* name, std::vector<Instance>& tier) {
      const json& arr = require(body, name, ctx);
      if (!arr.is_array()) throw IoError(ctx + "." + name + ": expected an array");
      for (std::size_t i = 0; i < arr.size(); ++i) {
        tier.push_back(read_instance(arr[i], file.classes, video_id,
                                     ctx + "." + name + "[" + std::to_string(i) + "]"));
      }
    };
    read_tier("positives", set.positives);
    read_tier("candidates", set.candidates);
    read_tier("rejected", set.rejected);

    const json& log = require(body, "refinement_log", ctx);
    if (!log.is_array()) throw IoError(ctx + ".refinement_log: expected an array");
    for (std::size_t i = 0; i < log.size(); ++i) {
      const std::string lctx = ctx + ".refinement_log[" + std::to_string(i) + "]";
      if (!log[i].is_object()) throw IoError(lctx + ": expected an object");
      reject_unknown_keys(log[i], {"instance", "action", "similarity"}, lctx);
      RefinementLogEntry entry;
      entry.instance_id = require_string(log[i], "instance", lctx);
      try {
        entry.action = refine_action_from_string(require_string(log[i], "action", lctx));
      } catch (const ComputeError& e) {
        throw IoError(lctx + ": " + e.what());
      }
      const json& sim = require(log[i], "similarity", lctx);
      if (sim.is_null()) {
        entry.similarity = std::nullopt;
      } else if (sim.is_number()) {
        entry.similarity = sim.get<double>();
      } else {
        throw IoError(lctx + ".similarity: expected a number or null");
      }
      set.refinement_log.push_back(std::move(entry));
    }
    file.videos.emplace(video_id, std::move(set));
  }
  return file;
}

void write_pseudo_labels(const PseudoLabelFile& file, const std::string& path) {
  JsonWriter w;
  w.begin_object();
  write_classes(w, file.classes);
  w.key("videos").begin_object();
  for (const auto& [video_id, set] : file.videos) {
    w.key(video_id).begin_object();
    w.key("tau_pos").value(set.tau_pos);
    w.key("tau_neg").value(set.tau_neg);
    w.key("no_survivors").value(set.no_survivors);
    const auto write_tier = [&](const char* name, const std::vector<Instance>& tier) {
      w.key(name).begin_array();
      for (const auto& inst : tier) write_instance(w, inst, file.classes);
      w.end_array();
    };
    write_tier("positives", set.positives);
    write_tier("candidates", set.candidates);
    write_tier("rejected", set.rejected);
    w.key("refinement_log").begin_array();
    for (const auto& entry : set.refinement_log) {
      w.begin_object();
      w.key("instance").value(entry.instance_id);
      w.key("action").value(to_string(entry.action));
      w.key("similarity");
      if (entry.similarity) {
        w.value(*entry.similarity);
      } else {
        w.null();
      }
      w.end_object();
    }
    w.end_array();
    w.end_object();
  }
  w.end_object();
  w.end_object();
  write_text(path, w.str() + "\n");
}

// ---- evaluation artifacts ----

void write_ap_csv(const MeanApResult& result,
                  const std::vector<std::string>& class_names,
                  const std::string& path) {
  std::string out = "threshold,class,ap\n";
  for (std::size_t ti = 0; ti < result.thresholds.size(); ++ti) {
    for (std::size_t ci = 0; ci < result.classes.size(); ++ci) {
      if (result.classes[ci] >= class_names.size()) {
        throw ComputeError("class index out of range for the class-name list");
      }
      out += JsonWriter::format_real(result.thresholds[ti]);
      out += ',';
      out += class_names[result.classes[ci]];
      out += ',';
      out += JsonWriter::format_real(result.ap[ti][ci]);
      out += '\n';
    }
  }
  write_text(path, out);
}

void write_eval_json(const MeanApResult& result, const QualityReport& quality,
                     const std::string& path) {
  JsonWriter w;
  w.begin_object();
  w.key("map").begin_object();
  for (std::size_t ti = 0; ti < result.thresholds.size(); ++ti) {
    w.key(JsonWriter::format_real(result.thresholds[ti]))
        .value(result.per_threshold[ti]);
  }
  w.end_object();
  w.key("avg").value(result.avg);
  w.key("quality").begin_object();
  w.key("class_acc").value(quality.class_acc);
  w.key("avg_tiou").value(quality.avg_tiou);
  w.key("pos_acc").value(quality.pos_acc);
  w.key("n_pseudo").value(quality.n_pseudo);
  w.key("n_gt").value(quality.n_gt);
  w.end_object();
  w.end_object();
  write_text(path, w.str() + "\n");
}

}  // namespace apl
