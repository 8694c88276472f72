#include "mtseg/classifier.hpp"

#include <unistd.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <random>
#include <sstream>

#include <json.hpp>

#include "mtseg/error.hpp"
#include "mtseg/process.hpp"

namespace mtseg {

std::string_view to_string(TracerClass t) { return t == TracerClass::FDG ? "FDG" : "PSMA"; }

TracerClass parse_tracer(std::string_view text) {
  std::string upper(text);
  for (char& c : upper) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  if (upper == "FDG") return TracerClass::FDG;
  if (upper == "PSMA") return TracerClass::PSMA;
  throw Error(ErrorCode::InvalidArgument, "unknown tracer '" + std::string(text) + "'");
}

namespace {

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

double softplus(double z) { return std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z))); }

double linear_score(const FeatureVector& f, const std::vector<double>& w, double bias) {
  double z = bias;
  for (std::size_t n = 0; n < FeatureVector::kSize; ++n) z += w[n] * f.values[n];
  return z;
}

double mean_loss(std::span<const LabeledFeatures> data, const std::vector<double>& w, double bias) {
  double total = 0.0;
  for (const auto& ex : data) {
    const double z = linear_score(ex.features, w, bias);
    const double y = ex.tracer == TracerClass::PSMA ? 1.0 : 0.0;
    total += softplus(z) - y * z;
  }
  return total / static_cast<double>(data.size());
}

}  // namespace

LinearClassifierModel fit_builtin(std::span<const LabeledFeatures> training, const FitConfig& cfg,
                                  std::vector<double>* loss_curve) {
  const auto psma = std::count_if(training.begin(), training.end(),
                                  [](const LabeledFeatures& ex) { return ex.tracer == TracerClass::PSMA; });
  if (psma == 0 || psma == static_cast<std::ptrdiff_t>(training.size()))
    throw Error(ErrorCode::SingleClassTrainingSet, "training set needs both FDG and PSMA examples");
  if (!(cfg.learning_rate >= 0.0)) throw Error(ErrorCode::InvalidArgument, "learning rate must be >= 0");

  const auto n = static_cast<double>(training.size());
  constexpr std::size_t K = FeatureVector::kSize;

  // Descent runs on standardized features (a fixed affine reparametrisation,
  // so the loss values are unchanged); weights are mapped back at the end.
  std::array<double, K> mu{}, sd{};
  for (const auto& ex : training)
    for (std::size_t k = 0; k < K; ++k) mu[k] += ex.features.values[k] / n;
  for (const auto& ex : training)
    for (std::size_t k = 0; k < K; ++k) sd[k] += (ex.features.values[k] - mu[k]) * (ex.features.values[k] - mu[k]) / n;
  for (double& v : sd) v = v > 1e-24 ? std::sqrt(v) : 1.0;
  std::vector<LabeledFeatures> z(training.begin(), training.end());
  for (auto& ex : z)
    for (std::size_t k = 0; k < K; ++k) ex.features.values[k] = (ex.features.values[k] - mu[k]) / sd[k];

  double sq_norms = 0.0;
  for (const auto& ex : z) {
    sq_norms += 1.0;
    for (double v : ex.features.values) sq_norms += v * v;
  }
  const double smoothness = sq_norms / (4.0 * n);
  const double step = std::min(cfg.learning_rate, 1.0 / smoothness);

  std::vector<double> w(K);
  std::mt19937_64 rng(cfg.seed);
  std::normal_distribution<double> init(0.0, 0.01);
  for (double& v : w) v = init(rng);
  double b = 0.0;

  std::vector<double> grad(K);
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    if (loss_curve != nullptr) loss_curve->push_back(mean_loss(z, w, b));
    std::fill(grad.begin(), grad.end(), 0.0);
    double grad_bias = 0.0;
    for (const auto& ex : z) {
      const double y = ex.tracer == TracerClass::PSMA ? 1.0 : 0.0;
      const double r = sigmoid(linear_score(ex.features, w, b)) - y;
      for (std::size_t k = 0; k < K; ++k) grad[k] += r * ex.features.values[k];
      grad_bias += r;
    }
    for (std::size_t k = 0; k < K; ++k) w[k] -= step * grad[k] / n;
    b -= step * grad_bias / n;
  }

  LinearClassifierModel model;
  model.weights.resize(K);
  model.bias = b;
  for (std::size_t k = 0; k < K; ++k) {
    model.weights[k] = w[k] / sd[k];
    model.bias -= w[k] * mu[k] / sd[k];
  }

  model.epochs = cfg.epochs;
  model.learning_rate = step;
  model.seed = cfg.seed;
  model.final_loss = mean_loss(z, w, b);
  if (loss_curve != nullptr) loss_curve->push_back(model.final_loss);
  return model;
}

double psma_score(const FeatureVector& features, const LinearClassifierModel& model) {
  if (model.weights.size() != FeatureVector::kSize)
    throw Error(ErrorCode::DimensionMismatch, "model has " + std::to_string(model.weights.size()) +
                                                  " weights, features have " + std::to_string(FeatureVector::kSize));
  return sigmoid(linear_score(features, model.weights, model.bias));
}

ClassificationResult classify_features(const FeatureVector& features, const LinearClassifierModel& model) {
  ClassificationResult r;
  r.features = features;
  r.psma_score = psma_score(features, model);
  r.tracer = r.psma_score > 0.5 ? TracerClass::PSMA : TracerClass::FDG;
  r.confidence = r.tracer == TracerClass::PSMA ? r.psma_score : 1.0 - r.psma_score;
  r.source = ClassificationSource::Builtin;
  return r;
}

ClassificationResult classify(const MipImage& mip, const LinearClassifierModel& model) {
  if (model.weights.size() != FeatureVector::kSize)
    throw Error(ErrorCode::DimensionMismatch, "model dimensionality does not match the feature extractor");
  return classify_features(extract_features(mip), model);
}

ClassificationResult parse_adapter_reply(std::string_view reply) {
  while (!reply.empty() && std::isspace(static_cast<unsigned char>(reply.back()))) reply.remove_suffix(1);
  if (reply.empty() || reply.find('\n') != std::string_view::npos)
    throw Error(ErrorCode::AdapterProtocolError, "expected exactly one reply line");
  std::istringstream in{std::string(reply)};
  std::string label, conf_text, extra;
  in >> label >> conf_text;
  if (in >> extra || conf_text.empty())
    throw Error(ErrorCode::AdapterProtocolError, "reply must be '<FDG|PSMA> <confidence>'");
  ClassificationResult r;
  if (label == "FDG") {
    r.tracer = TracerClass::FDG;
  } else if (label == "PSMA") {
    r.tracer = TracerClass::PSMA;
  } else {
    throw Error(ErrorCode::AdapterProtocolError, "unknown class '" + label + "'");
  }
  char* end = nullptr;
  const double conf = std::strtod(conf_text.c_str(), &end);
  if (end != conf_text.c_str() + conf_text.size() || !(conf >= 0.0 && conf <= 1.0))
    throw Error(ErrorCode::AdapterProtocolError, "confidence '" + conf_text + "' not in [0,1]");
  r.confidence = conf;
  r.psma_score = r.tracer == TracerClass::PSMA ? conf : 1.0 - conf;
  r.source = ClassificationSource::External;
  return r;
}

ClassificationResult classify_external(const MipImage& mip, const ExternalModelAdapter& adapter) {
  if (adapter.command.empty()) throw Error(ErrorCode::AdapterLaunchFailure, "no adapter command configured");
  std::string tmpl = (std::filesystem::temp_directory_path() / "mtseg-mip-XXXXXX.pfg").string();
  const int fd = mkstemps(tmpl.data(), 4);
  if (fd < 0) throw Error(ErrorCode::IoFailure, "cannot create temporary MIP file");
  close(fd);
  const std::filesystem::path file(tmpl);
  struct Cleanup {
    std::filesystem::path p;
    ~Cleanup() {
      std::error_code ec;
      std::filesystem::remove(p, ec);
    }
  } cleanup{file};

  write_float_grid(mip, file);
  const auto res = run_command(adapter.command, {file.string()}, adapter.timeout);
  if (res.timed_out) throw Error(ErrorCode::AdapterTimeout, "adapter exceeded " + std::to_string(adapter.timeout.count()) + " ms");
  if (res.exit_code != 0)
    throw Error(ErrorCode::AdapterLaunchFailure, "adapter exited with status " + std::to_string(res.exit_code));
  auto r = parse_adapter_reply(res.stdout_text);
  if (mip.normalized) {
    try {
      r.features = extract_features(mip);
    } catch (const Error&) {
    }
  }
  return r;
}

void save_model(const LinearClassifierModel& model, const std::filesystem::path& path) {
  nlohmann::json j;
  j["format"] = "mtseg-linear-classifier";
  j["version"] = 1;
  j["feature_names"] = FeatureVector::names();
  j["weights"] = model.weights;
  j["bias"] = model.bias;
  j["epochs"] = model.epochs;
  j["learning_rate"] = model.learning_rate;
  j["seed"] = model.seed;
  j["final_loss"] = model.final_loss;
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::IoFailure, "cannot open " + path.string());
  out << j.dump(2) << '\n';
  if (!out) throw Error(ErrorCode::IoFailure, "write failed: " + path.string());
}

LinearClassifierModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::FileNotFound, path.string());
  try {
    const auto j = nlohmann::json::parse(in);
    if (j.at("format") != "mtseg-linear-classifier") throw Error(ErrorCode::MalformedHeader, "not a classifier model");
    LinearClassifierModel m;
    m.weights = j.at("weights").get<std::vector<double>>();
    m.bias = j.at("bias").get<double>();
    m.epochs = j.value("epochs", std::size_t{0});
    m.learning_rate = j.value("learning_rate", 0.0);
    m.seed = j.value("seed", std::uint64_t{0});
    m.final_loss = j.value("final_loss", 0.0);
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::MalformedHeader, path.string() + ": " + e.what());
  }
}

}  // namespace mtseg
