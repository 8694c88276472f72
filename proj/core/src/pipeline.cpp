#include "mtseg/pipeline.hpp"

#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <fstream>
#include <json.hpp>
#include <memory>
#include <sstream>
#include <thread>

#include "mtseg/error.hpp"
#include "mtseg/fusion.hpp"
#include "mtseg/nifti.hpp"
#include "mtseg/process.hpp"

namespace mtseg {

namespace fs = std::filesystem;

namespace {

class TempDir {
 public:
  TempDir() {
    std::string tmpl = (fs::temp_directory_path() / "mtseg-seg-XXXXXX").string();
    if (!mkdtemp(tmpl.data())) throw Error(ErrorCode::IoFailure, "cannot create temporary directory");
    path_ = tmpl;
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

LabelVolume empty_like(const Geometry& g) { return LabelVolume(g, kBackground); }

LabelVolume load_aligned_labels(const fs::path& path, const Geometry& reference, const char* what) {
  LabelVolume lv = reorient_to_canonical(read_label_volume(path));
  require_same_geometry(lv.geometry, reference, what);
  return lv;
}

StudyRecord process_study(const StudyEntry& entry, const PipelineConfig& cfg, const TracerClassifier& classifier,
                          const Segmenter& segmenter) {
  StudyRecord rec;
  rec.id = entry.id;
  rec.known_tracer = entry.tracer;

  const ImageVolume pet = reorient_to_canonical(read_volume(entry.pet));
  const ImageVolume ct = reorient_to_canonical(read_volume(entry.ct));

  const MipImage mip = classification_input(pet, kDefaultMipSize, entry.id);
  rec.classification = classifier(mip);
  const TracerClass branch = rec.classification->tracer;

  const PreprocessedStudy pre = preprocess_study(pet, ct, cfg.preprocess.at(branch));
  LabelVolume mask = segmenter(SegmentationInput{entry, pre, branch});
  if (mask.geometry.dims != pre.pet.geometry.dims)
    throw Error(ErrorCode::ShapeMismatch, "segmenter output does not match the preprocessed grid");
  mask.geometry = pre.pet.geometry;
  for (auto& l : mask.labels) l = l != 0 ? kLesion : kBackground;

  LabelVolume pred = resample_labels(mask, pet.geometry);
  pred.schema_id = "binary";
  rec.predicted_voxels = static_cast<std::size_t>(std::count(pred.labels.begin(), pred.labels.end(), kLesion));
  rec.prediction = "predictions/" + entry.id + "_pred.nii.gz";
  write_volume(pred, cfg.output / rec.prediction);

  if (entry.gt) {
    LabelVolume gt = load_aligned_labels(*entry.gt, pet.geometry, "ground truth vs PET");
    for (auto& l : gt.labels) l = l != 0 ? kLesion : kBackground;
    rec.evaluation = evaluate_study(pred, gt, cfg.eval_mode, entry.id, cfg.connectivity);
    if (entry.organs || entry.bone) {
      const LabelVolume organs =
          entry.organs ? load_aligned_labels(*entry.organs, pet.geometry, "organs vs PET") : empty_like(pet.geometry);
      const LabelVolume bone =
          entry.bone ? load_aligned_labels(*entry.bone, pet.geometry, "bone vs PET") : empty_like(pet.geometry);
      const LabelVolume fused = fuse_labels(bone, organs, gt, FusionPolicy::defaults());
      rec.fused_labels = "fused/" + entry.id + "_labels.nii.gz";
      write_volume(fused, cfg.output / rec.fused_labels);
    }
  }
  rec.ok = true;
  return rec;
}

nlohmann::ordered_json study_json(const StudyRecord& s) {
  nlohmann::ordered_json j;
  j["record"] = "study";
  j["id"] = s.id;
  j["status"] = s.ok ? "ok" : "failed";
  if (!s.ok) {
    j["error"] = s.error_code;
    j["message"] = s.error_message;
  }
  if (s.classification) {
    j["tracer"] = std::string(to_string(s.classification->tracer));
    j["branch"] = std::string(to_string(s.classification->tracer));
    j["confidence"] = s.classification->confidence;
    j["psma_score"] = s.classification->psma_score;
    j["classifier"] = s.classification->source == ClassificationSource::Builtin ? "builtin" : "external";
  }
  if (s.known_tracer) j["known_tracer"] = std::string(to_string(*s.known_tracer));
  if (s.ok) {
    j["prediction"] = s.prediction;
    j["predicted_voxels"] = s.predicted_voxels;
    if (!s.fused_labels.empty()) j["fused_labels"] = s.fused_labels;
  }
  if (s.evaluation) {
    j["dice"] = s.evaluation->dice;
    j["fpvol_ml"] = s.evaluation->fpvol_ml;
    j["fnvol_ml"] = s.evaluation->fnvol_ml;
    j["mode"] = std::string(to_string(s.evaluation->mode));
  }
  return j;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) throw Error(ErrorCode::IoFailure, "cannot write " + path.string());
}

}  // namespace

TracerClassifier make_classifier(const ClassifierChoice& choice) {
  if (!choice.adapter.empty()) {
    ExternalModelAdapter adapter{choice.adapter, choice.timeout};
    return [adapter](const MipImage& mip) { return classify_external(mip, adapter); };
  }
  auto model = std::make_shared<const LinearClassifierModel>(load_model(choice.model));
  return [model](const MipImage& mip) { return classify(mip, *model); };
}

Segmenter make_segmenter(const SegmenterChoice& choice) {
  if (!choice.adapter.empty()) {
    return [choice](const SegmentationInput& in) {
      return segment_external(in.study, choice.adapter, choice.timeout);
    };
  }
  auto model = std::make_shared<const ToyUNet>(load_checkpoint(choice.checkpoint));
  const double overlap = choice.overlap;
  const double threshold = choice.threshold;
  return [model, overlap, threshold](const SegmentationInput& in) {
    const ImageVolume channels[] = {in.study.pet, in.study.ct};
    return binarize(predict_sliding_window(*model, channels, overlap), threshold);
  };
}

LabelVolume segment_external(const PreprocessedStudy& study, const std::string& command,
                             std::chrono::milliseconds timeout) {
  TempDir dir;
  const fs::path pet = dir.path() / "pet.nii.gz";
  const fs::path ct = dir.path() / "ct.nii.gz";
  const fs::path out = dir.path() / "pred.nii.gz";
  write_volume(study.pet, pet);
  write_volume(study.ct, ct);
  const ProcessResult r = run_command(command, {pet.string(), ct.string(), out.string()}, timeout);
  if (r.timed_out) throw Error(ErrorCode::AdapterTimeout, "segmenter adapter exceeded its time limit");
  if (r.exit_code != 0)
    throw Error(ErrorCode::AdapterLaunchFailure, "segmenter adapter exited with status " + std::to_string(r.exit_code));
  if (!fs::exists(out)) throw Error(ErrorCode::AdapterProtocolError, "segmenter adapter wrote no output volume");
  LabelVolume lv;
  try {
    lv = reorient_to_canonical(read_label_volume(out));
  } catch (const Error& e) {
    throw Error(ErrorCode::AdapterProtocolError, std::string("unreadable segmenter output: ") + e.what());
  }
  if (lv.geometry.dims != study.pet.geometry.dims)
    throw Error(ErrorCode::AdapterProtocolError, "segmenter output dims differ from the input grid");
  lv.geometry = study.pet.geometry;
  return lv;
}

RunReport run_pipeline(const PipelineConfig& cfg, const PipelineHooks& hooks) {
  validate(cfg);
  const std::vector<StudyEntry> studies = load_manifest(cfg.manifest);
  const TracerClassifier classifier = hooks.classifier ? hooks.classifier : make_classifier(cfg.classifier);
  const Segmenter segmenter = hooks.segmenter ? hooks.segmenter : make_segmenter(cfg.segmenter);

  std::error_code ec;
  fs::create_directories(cfg.output / "predictions", ec);
  if (ec) throw Error(ErrorCode::IoFailure, "cannot create output directory " + cfg.output.string());
  if (std::any_of(studies.begin(), studies.end(), [](const StudyEntry& s) { return s.gt && (s.organs || s.bone); }))
    fs::create_directories(cfg.output / "fused");

  std::vector<StudyRecord> records(studies.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < studies.size(); i = next++) {
      try {
        records[i] = process_study(studies[i], cfg, classifier, segmenter);
      } catch (const Error& e) {
        records[i] = StudyRecord{};
        records[i].id = studies[i].id;
        records[i].known_tracer = studies[i].tracer;
        records[i].error_code = std::string(to_string(e.code()));
        records[i].error_message = e.what();
      } catch (const std::exception& e) {
        records[i] = StudyRecord{};
        records[i].id = studies[i].id;
        records[i].known_tracer = studies[i].tracer;
        records[i].error_code = "Internal";
        records[i].error_message = e.what();
      }
    }
  };
  {
    const std::size_t n = std::min(cfg.workers, studies.size());
    std::vector<std::jthread> pool;
    for (std::size_t t = 1; t < n; ++t) pool.emplace_back(worker);
    worker();
  }

  RunReport report;
  report.config_echo = to_ini(cfg, false);
  report.studies = std::move(records);
  std::sort(report.studies.begin(), report.studies.end(),
            [](const StudyRecord& a, const StudyRecord& b) { return a.id < b.id; });
  std::vector<EvalReport> evals;
  for (const auto& s : report.studies) {
    (s.ok ? report.succeeded : report.failed)++;
    if (s.evaluation) evals.push_back(*s.evaluation);
    if (s.known_tracer && s.classification) {
      ++report.classifier_known;
      if (s.classification->tracer == *s.known_tracer) ++report.classifier_correct;
    }
  }
  if (!evals.empty()) report.summary = aggregate(evals);

  write_text(cfg.output / "report.jsonl", report_jsonl(report));
  write_text(cfg.output / "summary.txt", summary_text(report));
  return report;
}

TrainingCase prepare_training_case(const ImageVolume& pet, const ImageVolume& ct, const LabelVolume& lesion,
                                   const PreprocessParams& params) {
  const ImageVolume cpet = reorient_to_canonical(pet);
  LabelVolume clesion = reorient_to_canonical(lesion);
  require_same_geometry(clesion.geometry, cpet.geometry, "lesion vs PET");
  PreprocessedStudy pre = preprocess_study(cpet, reorient_to_canonical(ct), params);
  LabelVolume mask = resample_labels(clesion, pre.pet.geometry);
  for (auto& l : mask.labels) l = l != 0 ? kLesion : kBackground;
  return TrainingCase{std::move(pre.pet), std::move(pre.ct), std::move(mask)};
}

std::vector<StudyEntry> write_phantom_suite(const PhantomSuiteSpec& suite, const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::IoFailure, "cannot create " + dir.string());
  std::vector<StudyEntry> entries;
  for (const auto& spec : phantom_suite(suite)) {
    const Phantom p = generate_phantom(spec);
    StudyEntry e{spec.id, spec.id + "_pet.nii.gz", spec.id + "_ct.nii.gz", spec.id + "_lesion.nii.gz",
                 spec.id + "_organs.nii.gz", spec.id + "_bone.nii.gz", p.tracer};
    write_volume(p.pet, dir / e.pet);
    write_volume(p.ct, dir / e.ct);
    write_volume(p.lesion, dir / *e.gt);
    write_volume(p.organs, dir / *e.organs);
    write_volume(p.bone, dir / *e.bone);
    entries.push_back(std::move(e));
  }
  write_text(dir / "manifest.jsonl", to_jsonl(entries));
  return entries;
}

std::string report_jsonl(const RunReport& report) {
  std::string out;
  nlohmann::ordered_json config;
  config["record"] = "config";
  config["text"] = report.config_echo;
  out += config.dump() + "\n";
  for (const auto& s : report.studies) out += study_json(s).dump() + "\n";

  nlohmann::ordered_json summary;
  summary["record"] = "summary";
  summary["studies"] = report.studies.size();
  summary["succeeded"] = report.succeeded;
  summary["failed"] = report.failed;
  if (report.summary) {
    summary["evaluated"] = report.summary->studies;
    summary["mean_dice"] = report.summary->mean_dice;
    summary["mean_fpvol_ml"] = report.summary->mean_fpvol_ml;
    summary["mean_fnvol_ml"] = report.summary->mean_fnvol_ml;
  } else {
    summary["evaluated"] = 0;
  }
  if (report.classifier_known > 0) {
    summary["classifier_known"] = report.classifier_known;
    summary["classifier_correct"] = report.classifier_correct;
    summary["classifier_accuracy"] =
        static_cast<double>(report.classifier_correct) / static_cast<double>(report.classifier_known);
  }
  out += summary.dump() + "\n";
  return out;
}

std::string summary_text(const RunReport& report) {
  std::ostringstream out;
  char line[256];
  out << "studies: " << report.studies.size() << " (" << report.succeeded << " ok, " << report.failed
      << " failed)\n\n";
  std::snprintf(line, sizeof line, "%-20s %-6s %-6s %8s %10s %10s\n", "id", "status", "tracer", "dice", "fpvol_ml",
                "fnvol_ml");
  out << line;
  for (const auto& s : report.studies) {
    const std::string tracer = s.classification ? std::string(to_string(s.classification->tracer)) : "-";
    if (s.evaluation) {
      std::snprintf(line, sizeof line, "%-20s %-6s %-6s %8.4f %10.4f %10.4f\n", s.id.c_str(), "ok", tracer.c_str(),
                    s.evaluation->dice, s.evaluation->fpvol_ml, s.evaluation->fnvol_ml);
    } else {
      std::snprintf(line, sizeof line, "%-20s %-6s %-6s %8s %10s %10s\n", s.id.c_str(), s.ok ? "ok" : "failed",
                    tracer.c_str(), "-", "-", "-");
    }
    out << line;
    if (!s.ok) out << "    " << s.error_message << "\n";
  }
  if (report.summary) {
    std::snprintf(line, sizeof line, "\nmean over %zu evaluated: dice %.4f  fpvol %.4f mL  fnvol %.4f mL (%s)\n",
                  report.summary->studies, report.summary->mean_dice, report.summary->mean_fpvol_ml,
                  report.summary->mean_fnvol_ml,
                  report.studies.empty() || !report.studies.front().evaluation
                      ? "component"
                      : std::string(to_string(report.studies.front().evaluation->mode)).c_str());
    out << line;
  }
  if (report.classifier_known > 0) {
    std::snprintf(line, sizeof line, "tracer classification: %zu/%zu correct\n", report.classifier_correct,
                  report.classifier_known);
    out << line;
  }
  out << "\nreference (full-scale models on the challenge test set, not reproduced here):\n";
  for (const auto& r : kReferenceResults) {
    std::snprintf(line, sizeof line, "  %-5s dice %.4f  fpvol %.4f mL  fnvol %.4f mL\n", std::string(r.tracer).c_str(),
                  r.dice, r.fpvol_ml, r.fnvol_ml);
    out << line;
  }
  std::snprintf(line, sizeof line, "  tracer classification accuracy %.2f%%\n", 100.0 * kReferenceClassifierAccuracy);
  out << line;
  return out.str();
}

}  // namespace mtseg
