#include "mtseg/config.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <charconv>
#include <fstream>
#include <set>
#include <sstream>
#include <vector>

#include "mtseg/error.hpp"

namespace mtseg {

namespace pt = boost::property_tree;

std::string_view to_string(Interpolation i) { return i == Interpolation::Trilinear ? "trilinear" : "nearest"; }

std::string_view to_string(Normalization n) {
  switch (n) {
    case Normalization::ZScore: return "zscore";
    case Normalization::ZScoreMasked: return "zscore_masked";
    case Normalization::None: return "none";
  }
  return "?";
}

std::string_view to_string(AlphaWeighting w) { return w == AlphaWeighting::Uniform ? "uniform" : "balanced"; }

Interpolation parse_interpolation(std::string_view text) {
  if (text == "trilinear") return Interpolation::Trilinear;
  if (text == "nearest") return Interpolation::Nearest;
  throw Error(ErrorCode::InvalidArgument, "interpolation must be 'trilinear' or 'nearest'");
}

Normalization parse_normalization(std::string_view text) {
  if (text == "zscore") return Normalization::ZScore;
  if (text == "zscore_masked") return Normalization::ZScoreMasked;
  if (text == "none") return Normalization::None;
  throw Error(ErrorCode::InvalidArgument, "normalization must be 'zscore', 'zscore_masked' or 'none'");
}

AlphaWeighting parse_alpha_weighting(std::string_view text) {
  if (text == "uniform") return AlphaWeighting::Uniform;
  if (text == "balanced") return AlphaWeighting::Balanced;
  throw Error(ErrorCode::InvalidArgument, "alpha_weighting must be 'uniform' or 'balanced'");
}

namespace {

[[noreturn]] void invalid(const std::string& what) { throw Error(ErrorCode::ConfigInvalid, what); }

std::string fmt(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  (void)ec;
  return std::string(buf, end);
}

std::vector<std::string> words(const std::string& text) {
  std::istringstream in(text);
  std::vector<std::string> out;
  for (std::string w; in >> w;) out.push_back(w);
  return out;
}

double to_double(const std::string& key, const std::string& text) {
  double v = 0.0;
  const char* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, v);
  if (ec != std::errc() || ptr != end) invalid(key + ": '" + text + "' is not a number");
  return v;
}

std::uint64_t to_uint(const std::string& key, const std::string& text) {
  std::uint64_t v = 0;
  const char* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, v);
  if (ec != std::errc() || ptr != end) invalid(key + ": '" + text + "' is not a non-negative integer");
  return v;
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& text) {
  std::filesystem::path p(text);
  if (p.is_relative() && !base.empty()) p = base / p;
  return p.lexically_normal();
}

// Runs `fn`, converting library argument errors into ConfigInvalid with the
// offending key attached.
template <class Fn>
auto guarded(const std::string& key, Fn&& fn) {
  try {
    return fn();
  } catch (const Error& e) {
    if (e.code() == ErrorCode::ConfigInvalid) throw;
    invalid(key + ": " + e.what());
  }
}

void parse_preprocess(const pt::ptree& section, const std::string& name, PreprocessParams& p) {
  for (const auto& [key, node] : section) {
    const std::string full = name + "." + key;
    const std::string value = node.get_value<std::string>();
    if (key == "spacing") {
      const auto w = words(value);
      if (w.size() != 3) invalid(full + ": expected three values");
      for (int a = 0; a < 3; ++a) p.target_spacing[a] = to_double(full, w[a]);
    } else if (key == "interpolation") {
      p.image_interpolation = guarded(full, [&] { return parse_interpolation(value); });
    } else if (key == "normalization") {
      p.normalization = guarded(full, [&] { return parse_normalization(value); });
    } else if (key == "ct_clip") {
      if (value == "off") {
        p.ct_clip.reset();
      } else {
        const auto w = words(value);
        if (w.size() != 2) invalid(full + ": expected 'lo hi' or 'off'");
        p.ct_clip = ClipPercentiles{to_double(full, w[0]), to_double(full, w[1])};
      }
    } else {
      invalid("unknown key " + full);
    }
  }
}

}  // namespace

void validate(const PipelineConfig& cfg) {
  if (cfg.manifest.empty()) invalid("run.manifest is required");
  if (cfg.output.empty()) invalid("run.output is required");
  if (cfg.classifier.model.empty() == cfg.classifier.adapter.empty())
    invalid("exactly one of classifier.model and classifier.adapter must be set");
  if (cfg.segmenter.checkpoint.empty() == cfg.segmenter.adapter.empty())
    invalid("exactly one of segmenter.checkpoint and segmenter.adapter must be set");
  if (cfg.classifier.timeout.count() <= 0 || cfg.segmenter.timeout.count() <= 0)
    invalid("adapter timeouts must be positive");
  if (!(cfg.segmenter.threshold > 0.0 && cfg.segmenter.threshold < 1.0))
    invalid("segmenter.threshold must lie in (0, 1)");
  if (!(cfg.segmenter.overlap >= 0.0 && cfg.segmenter.overlap < 1.0))
    invalid("segmenter.overlap must lie in [0, 1)");
  if (cfg.workers == 0) invalid("run.workers must be at least 1");
  for (TracerClass t : {TracerClass::FDG, TracerClass::PSMA}) {
    auto it = cfg.preprocess.find(t);
    const std::string name = t == TracerClass::FDG ? "preprocess_fdg" : "preprocess_psma";
    if (it == cfg.preprocess.end()) invalid("missing tracer branch " + name);
    if (it->second.tracer != t) invalid(name + ": tracer mismatch");
    guarded(name, [&] { validate(it->second); return 0; });
  }
  guarded("loss", [&] { validate(cfg.loss); return 0; });
}

PipelineConfig parse_config(const std::string& text, const std::filesystem::path& base_dir) {
  pt::ptree tree;
  try {
    std::istringstream in(text);
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    invalid(std::string("malformed configuration: ") + e.what());
  }

  PipelineConfig cfg;
  const std::set<std::string> sections{"run", "classifier", "segmenter", "preprocess_fdg",
                                       "preprocess_psma", "loss", "evaluation"};
  for (const auto& [name, section] : tree) {
    if (!sections.contains(name)) invalid("unknown section [" + name + "]");
    if (section.empty() && !section.data().empty()) invalid("key '" + name + "' outside of a section");
  }

  auto each = [&](const std::string& name, auto&& fn) {
    if (auto s = tree.get_child_optional(name))
      for (const auto& [key, node] : *s) fn(key, node.template get_value<std::string>(), name + "." + key);
  };

  each("run", [&](const std::string& key, const std::string& v, const std::string& full) {
    if (key == "manifest") cfg.manifest = resolve(base_dir, v);
    else if (key == "output") cfg.output = resolve(base_dir, v);
    else if (key == "seed") cfg.seed = to_uint(full, v);
    else if (key == "workers") cfg.workers = to_uint(full, v);
    else invalid("unknown key " + full);
  });
  each("classifier", [&](const std::string& key, const std::string& v, const std::string& full) {
    if (key == "model") cfg.classifier.model = resolve(base_dir, v);
    else if (key == "adapter") cfg.classifier.adapter = v;
    else if (key == "timeout_ms") cfg.classifier.timeout = std::chrono::milliseconds(to_uint(full, v));
    else invalid("unknown key " + full);
  });
  each("segmenter", [&](const std::string& key, const std::string& v, const std::string& full) {
    if (key == "checkpoint") cfg.segmenter.checkpoint = resolve(base_dir, v);
    else if (key == "adapter") cfg.segmenter.adapter = v;
    else if (key == "timeout_ms") cfg.segmenter.timeout = std::chrono::milliseconds(to_uint(full, v));
    else if (key == "threshold") cfg.segmenter.threshold = to_double(full, v);
    else if (key == "overlap") cfg.segmenter.overlap = to_double(full, v);
    else invalid("unknown key " + full);
  });
  if (auto s = tree.get_child_optional("preprocess_fdg"))
    parse_preprocess(*s, "preprocess_fdg", cfg.preprocess[TracerClass::FDG]);
  if (auto s = tree.get_child_optional("preprocess_psma"))
    parse_preprocess(*s, "preprocess_psma", cfg.preprocess[TracerClass::PSMA]);
  each("loss", [&](const std::string& key, const std::string& v, const std::string& full) {
    if (key == "alpha") cfg.loss.alpha = to_double(full, v);
    else if (key == "gamma") cfg.loss.gamma = to_double(full, v);
    else if (key == "epsilon") cfg.loss.epsilon = to_double(full, v);
    else if (key == "lambda_dice") cfg.loss.lambda_dice = to_double(full, v);
    else if (key == "lambda_focal") cfg.loss.lambda_focal = to_double(full, v);
    else if (key == "alpha_weighting") cfg.loss.alpha_weighting = guarded(full, [&] { return parse_alpha_weighting(v); });
    else invalid("unknown key " + full);
  });
  each("evaluation", [&](const std::string& key, const std::string& v, const std::string& full) {
    if (key == "mode") cfg.eval_mode = guarded(full, [&] { return parse_false_volume_mode(v); });
    else if (key == "connectivity")
      cfg.connectivity = guarded(full, [&] { return parse_connectivity(static_cast<int>(to_uint(full, v))); });
    else invalid("unknown key " + full);
  });
  return cfg;
}

PipelineConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) invalid("cannot read configuration file " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  return parse_config(text.str(), std::filesystem::absolute(path).parent_path());
}

std::string to_ini(const PipelineConfig& cfg, bool include_execution) {
  std::ostringstream out;
  out << "[run]\n";
  out << "manifest = " << cfg.manifest.string() << "\n";
  if (include_execution) out << "output = " << cfg.output.string() << "\n";
  out << "seed = " << cfg.seed << "\n";
  if (include_execution) out << "workers = " << cfg.workers << "\n";

  out << "\n[classifier]\n";
  if (!cfg.classifier.model.empty()) out << "model = " << cfg.classifier.model.string() << "\n";
  if (!cfg.classifier.adapter.empty()) out << "adapter = " << cfg.classifier.adapter << "\n";
  out << "timeout_ms = " << cfg.classifier.timeout.count() << "\n";

  out << "\n[segmenter]\n";
  if (!cfg.segmenter.checkpoint.empty()) out << "checkpoint = " << cfg.segmenter.checkpoint.string() << "\n";
  if (!cfg.segmenter.adapter.empty()) out << "adapter = " << cfg.segmenter.adapter << "\n";
  out << "timeout_ms = " << cfg.segmenter.timeout.count() << "\n";
  out << "threshold = " << fmt(cfg.segmenter.threshold) << "\n";
  out << "overlap = " << fmt(cfg.segmenter.overlap) << "\n";

  for (const auto& [tracer, p] : cfg.preprocess) {
    out << "\n[preprocess_" << (tracer == TracerClass::FDG ? "fdg" : "psma") << "]\n";
    out << "spacing = " << fmt(p.target_spacing[0]) << " " << fmt(p.target_spacing[1]) << " "
        << fmt(p.target_spacing[2]) << "\n";
    out << "interpolation = " << to_string(p.image_interpolation) << "\n";
    out << "normalization = " << to_string(p.normalization) << "\n";
    out << "ct_clip = " << (p.ct_clip ? fmt(p.ct_clip->lo) + " " + fmt(p.ct_clip->hi) : std::string("off")) << "\n";
  }

  out << "\n[loss]\n";
  out << "alpha = " << fmt(cfg.loss.alpha) << "\n";
  out << "gamma = " << fmt(cfg.loss.gamma) << "\n";
  out << "epsilon = " << fmt(cfg.loss.epsilon) << "\n";
  out << "lambda_dice = " << fmt(cfg.loss.lambda_dice) << "\n";
  out << "lambda_focal = " << fmt(cfg.loss.lambda_focal) << "\n";
  out << "alpha_weighting = " << to_string(cfg.loss.alpha_weighting) << "\n";

  out << "\n[evaluation]\n";
  out << "mode = " << to_string(cfg.eval_mode) << "\n";
  out << "connectivity = " << static_cast<int>(cfg.connectivity) << "\n";
  return out.str();
}

}  // namespace mtseg
