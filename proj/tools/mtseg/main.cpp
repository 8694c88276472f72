// mtseg command-line front end. Exit codes: 0 success, 1 usage or invalid
// configuration, 2 data error, 3 internal error.

#include <CLI11.hpp>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <optional>

#include "mtseg/classifier.hpp"
#include "mtseg/config.hpp"
#include "mtseg/error.hpp"
#include "mtseg/fusion.hpp"
#include "mtseg/label_schema.hpp"
#include "mtseg/manifest.hpp"
#include "mtseg/metrics.hpp"
#include "mtseg/mip.hpp"
#include "mtseg/nifti.hpp"
#include "mtseg/phantom.hpp"
#include "mtseg/pipeline.hpp"
#include "mtseg/preprocess.hpp"
#include "mtseg/segmenter.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using namespace mtseg;

namespace {

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
};

void add_common(CLI::App* cmd, Common& c, bool out_required) {
  cmd->add_option("--config", c.config, "INI configuration file; flags override its values")
      ->check(CLI::ExistingFile);
  cmd->add_option("--seed", c.seed, "Random seed");
  auto* out = cmd->add_option("--out", c.out, "Output location");
  if (out_required) out->required();
}

PipelineConfig base_config(const Common& c) {
  PipelineConfig cfg = c.config.empty() ? PipelineConfig{} : load_config(c.config);
  if (c.seed) cfg.seed = *c.seed;
  return cfg;
}

void emit(const json& record, const std::string& out) {
  if (out.empty()) {
    std::cout << record.dump() << "\n";
    return;
  }
  std::ofstream f(out, std::ios::binary);
  f << record.dump() << "\n";
  if (!f) throw Error(ErrorCode::IoFailure, "cannot write " + out);
}

void ensure_parent(const fs::path& p) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
}

json classification_json(const ClassificationResult& r) {
  json j;
  j["tracer"] = std::string(to_string(r.tracer));
  j["confidence"] = r.confidence;
  j["psma_score"] = r.psma_score;
  j["classifier"] = r.source == ClassificationSource::Builtin ? "builtin" : "external";
  return j;
}

void apply_preprocess_overrides(PreprocessParams& p, const std::optional<std::vector<double>>& spacing,
                                const std::string& interp, const std::string& norm,
                                const std::optional<std::vector<std::string>>& clip) {
  if (spacing) p.target_spacing = {(*spacing)[0], (*spacing)[1], (*spacing)[2]};
  if (!interp.empty()) p.image_interpolation = parse_interpolation(interp);
  if (!norm.empty()) p.normalization = parse_normalization(norm);
  if (clip) {
    if (clip->size() == 1 && clip->front() == "off") p.ct_clip.reset();
    else if (clip->size() == 2) p.ct_clip = ClipPercentiles{std::stod((*clip)[0]), std::stod((*clip)[1])};
    else throw Error(ErrorCode::ConfigInvalid, "--ct-clip expects 'lo hi' or 'off'");
  }
  validate(p);
}

std::vector<std::string> split_dims(const std::vector<std::size_t>& v) {
  std::vector<std::string> s;
  for (auto x : v) s.push_back(std::to_string(x));
  return s;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multitracer PET lesion segmentation toolkit"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Show help for every command");

  // phantom
  Common phc;
  PhantomSuiteSpec ph_defaults;
  std::size_t ph_fdg = ph_defaults.fdg, ph_psma = ph_defaults.psma, ph_max_lesions = ph_defaults.max_lesions;
  double ph_noise = ph_defaults.noise;
  std::vector<std::size_t> ph_dims{48, 40, 64};
  std::vector<double> ph_spacing{2.0, 2.0, 2.0};
  auto* phantom = app.add_subcommand("phantom", "Generate a synthetic PET/CT phantom suite and its manifest");
  add_common(phantom, phc, true);
  phantom->add_option("--fdg", ph_fdg, "Number of FDG-like studies")->capture_default_str();
  phantom->add_option("--psma", ph_psma, "Number of PSMA-like studies")->capture_default_str();
  phantom->add_option("--noise", ph_noise, "Relative PET noise")->capture_default_str();
  phantom->add_option("--max-lesions", ph_max_lesions, "Lesion spheres per study (1..n)")->capture_default_str();
  phantom->add_option("--dims", ph_dims, "Volume dims x y z")->expected(3)->capture_default_str();
  phantom->add_option("--spacing", ph_spacing, "Voxel spacing in mm")->expected(3)->capture_default_str();

  // fit-classifier
  Common fcc;
  std::string fc_manifest;
  std::optional<std::size_t> fc_epochs;
  std::optional<double> fc_lr;
  auto* fit = app.add_subcommand("fit-classifier", "Fit the builtin tracer classifier on studies with known tracer");
  add_common(fit, fcc, true);
  fit->add_option("--manifest", fc_manifest, "Manifest (each study needs a tracer)");
  fit->add_option("--epochs", fc_epochs, "Gradient-descent epochs");
  fit->add_option("--lr", fc_lr, "Learning rate (capped by the smoothness bound)");

  // classify
  Common clc;
  std::string cl_pet, cl_model, cl_adapter, cl_png;
  std::optional<std::size_t> cl_timeout;
  auto* classify_cmd = app.add_subcommand("classify", "Classify the tracer of one PET volume from its coronal MIP");
  add_common(classify_cmd, clc, false);
  classify_cmd->add_option("--pet", cl_pet, "PET volume")->required()->check(CLI::ExistingFile);
  classify_cmd->add_option("--model", cl_model, "Builtin classifier model (JSON)");
  classify_cmd->add_option("--adapter", cl_adapter, "External classifier command");
  classify_cmd->add_option("--timeout-ms", cl_timeout, "External classifier time limit");
  classify_cmd->add_option("--mip-png", cl_png, "Also write the classification MIP as PNG");

  // preprocess
  Common ppc;
  std::string pp_pet, pp_ct, pp_tracer, pp_interp, pp_norm;
  std::optional<std::vector<double>> pp_spacing;
  std::optional<std::vector<std::string>> pp_clip;
  auto* prep = app.add_subcommand("preprocess", "Resample and normalize one PET/CT pair");
  add_common(prep, ppc, true);
  prep->add_option("--pet", pp_pet, "PET volume")->required()->check(CLI::ExistingFile);
  prep->add_option("--ct", pp_ct, "CT volume")->required()->check(CLI::ExistingFile);
  prep->add_option("--tracer", pp_tracer, "Tracer branch (FDG or PSMA)")->required();
  prep->add_option("--spacing", pp_spacing, "Target spacing in mm")->expected(3);
  prep->add_option("--interpolation", pp_interp, "trilinear | nearest");
  prep->add_option("--normalization", pp_norm, "zscore | zscore_masked | none");
  prep->add_option("--ct-clip", pp_clip, "CT percentile clip 'lo hi' or 'off'")->expected(1, 2);

  // fuse-labels
  Common fuc;
  std::string fu_bone, fu_organs, fu_lesions;
  auto* fuse = app.add_subcommand("fuse-labels", "Merge bone, organ and lesion labels into one volume");
  add_common(fuse, fuc, true);
  fuse->add_option("--lesions", fu_lesions, "Lesion label volume")->required()->check(CLI::ExistingFile);
  fuse->add_option("--organs", fu_organs, "Organ label volume")->check(CLI::ExistingFile);
  fuse->add_option("--bone", fu_bone, "Bone label volume")->check(CLI::ExistingFile);

  // train-toy
  Common trc;
  std::string tr_manifest, tr_curve;
  std::optional<std::size_t> tr_epochs, tr_batch, tr_workers, tr_patch;
  std::optional<double> tr_lr, tr_fg;
  std::optional<std::vector<std::size_t>> tr_widths;
  auto* train_cmd = app.add_subcommand("train-toy", "Train the toy 3D segmentation network on labelled studies");
  add_common(train_cmd, trc, true);
  train_cmd->add_option("--manifest", tr_manifest, "Manifest of studies with ground truth");
  train_cmd->add_option("--epochs", tr_epochs, "Epochs (default 200)");
  train_cmd->add_option("--batch", tr_batch, "Patches per step (default 4)");
  train_cmd->add_option("--lr", tr_lr, "SGD learning rate (default 0.01)");
  train_cmd->add_option("--foreground", tr_fg, "Fraction of lesion-centred patches (default 0.5)");
  train_cmd->add_option("--patch", tr_patch, "Cubic patch edge (default 32)");
  train_cmd->add_option("--widths", tr_widths, "Channels per level (default 4 8)");
  train_cmd->add_option("--workers", tr_workers, "Threads per batch (results do not depend on it)");
  train_cmd->add_option("--curve", tr_curve, "Loss curve output (default <out>.curve.json)");

  // segment
  Common sgc;
  std::string sg_pet, sg_ct, sg_tracer, sg_ckpt, sg_adapter;
  std::optional<double> sg_threshold, sg_overlap;
  auto* seg = app.add_subcommand("segment", "Segment lesions in one PET/CT pair");
  add_common(seg, sgc, true);
  seg->add_option("--pet", sg_pet, "PET volume")->required()->check(CLI::ExistingFile);
  seg->add_option("--ct", sg_ct, "CT volume")->required()->check(CLI::ExistingFile);
  seg->add_option("--tracer", sg_tracer, "Tracer branch (FDG or PSMA)")->required();
  seg->add_option("--checkpoint", sg_ckpt, "Toy network checkpoint");
  seg->add_option("--adapter", sg_adapter, "External segmenter command");
  seg->add_option("--threshold", sg_threshold, "Probability threshold");
  seg->add_option("--overlap", sg_overlap, "Sliding-window overlap");

  // evaluate
  Common evc;
  std::string ev_pred, ev_gt, ev_mode, ev_id;
  std::optional<int> ev_conn;
  auto* eval = app.add_subcommand("evaluate", "Score a predicted lesion mask against ground truth");
  add_common(eval, evc, false);
  eval->add_option("--pred", ev_pred, "Predicted mask")->required()->check(CLI::ExistingFile);
  eval->add_option("--gt", ev_gt, "Ground-truth mask")->required()->check(CLI::ExistingFile);
  eval->add_option("--mode", ev_mode, "component | voxelwise");
  eval->add_option("--connectivity", ev_conn, "6 | 18 | 26");
  eval->add_option("--id", ev_id, "Study id for the record");

  // pipeline
  Common plc;
  std::string pl_manifest;
  std::optional<std::size_t> pl_workers;
  auto* pipe = app.add_subcommand("pipeline", "Run classify, route, preprocess, segment and evaluate over a manifest");
  add_common(pipe, plc, false);
  pipe->get_option("--config")->required();
  pipe->add_option("--manifest", pl_manifest, "Override run.manifest");
  pipe->add_option("--workers", pl_workers, "Override run.workers");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  try {
    if (*phantom) {
      PhantomSuiteSpec suite = ph_defaults;
      suite.fdg = ph_fdg;
      suite.psma = ph_psma;
      suite.seed = base_config(phc).seed;
      suite.noise = ph_noise;
      suite.max_lesions = ph_max_lesions;
      suite.dims = {ph_dims[0], ph_dims[1], ph_dims[2]};
      suite.spacing = {ph_spacing[0], ph_spacing[1], ph_spacing[2]};
      const fs::path dir(phc.out);
      const auto entries = write_phantom_suite(suite, dir);
      std::cout << "wrote " << entries.size() << " studies and manifest.jsonl to " << dir.string() << "\n";
    } else if (*fit) {
      const PipelineConfig cfg = base_config(fcc);
      const fs::path manifest = fc_manifest.empty() ? cfg.manifest : fs::path(fc_manifest);
      if (manifest.empty()) throw Error(ErrorCode::ConfigInvalid, "a manifest is required");
      std::vector<LabeledFeatures> data;
      for (const auto& s : load_manifest(manifest)) {
        if (!s.tracer) throw Error(ErrorCode::ManifestUnreadable, "study '" + s.id + "' has no tracer");
        const MipImage mip = classification_input(reorient_to_canonical(read_volume(s.pet)));
        data.push_back({extract_features(mip), *s.tracer});
      }
      FitConfig fc;
      fc.seed = cfg.seed;
      if (fc_epochs) fc.epochs = *fc_epochs;
      if (fc_lr) fc.learning_rate = *fc_lr;
      const LinearClassifierModel model = fit_builtin(data, fc);
      std::size_t correct = 0;
      for (const auto& d : data) correct += classify_features(d.features, model).tracer == d.tracer;
      ensure_parent(fcc.out);
      save_model(model, fcc.out);
      json j;
      j["model"] = fcc.out;
      j["studies"] = data.size();
      j["training_accuracy"] = static_cast<double>(correct) / static_cast<double>(data.size());
      j["final_loss"] = model.final_loss;
      std::cout << j.dump() << "\n";
    } else if (*classify_cmd) {
      const PipelineConfig cfg = base_config(clc);
      ClassifierChoice choice = cfg.classifier;
      if (!cl_model.empty() || !cl_adapter.empty()) choice = ClassifierChoice{cl_model, cl_adapter, choice.timeout};
      if (cl_timeout) choice.timeout = std::chrono::milliseconds(*cl_timeout);
      if (choice.model.empty() == choice.adapter.empty())
        throw Error(ErrorCode::ConfigInvalid, "exactly one of --model and --adapter is required");
      const MipImage mip = classification_input(reorient_to_canonical(read_volume(cl_pet)), kDefaultMipSize, cl_pet);
      if (!cl_png.empty()) write_mip_png(mip, cl_png);
      json j;
      j["pet"] = cl_pet;
      j.update(classification_json(make_classifier(choice)(mip)));
      emit(j, clc.out);
    } else if (*prep) {
      const PipelineConfig cfg = base_config(ppc);
      const TracerClass tracer = parse_tracer(pp_tracer);
      PreprocessParams params = cfg.preprocess.at(tracer);
      apply_preprocess_overrides(params, pp_spacing, pp_interp, pp_norm, pp_clip);
      const PreprocessedStudy pre = preprocess_study(reorient_to_canonical(read_volume(pp_pet)),
                                                     reorient_to_canonical(read_volume(pp_ct)), params);
      const fs::path dir(ppc.out);
      fs::create_directories(dir);
      write_volume(pre.pet, dir / "pet.nii.gz");
      write_volume(pre.ct, dir / "ct.nii.gz");
      json j;
      j["tracer"] = std::string(to_string(tracer));
      j["dims"] = pre.pet.geometry.dims;
      j["spacing"] = pre.pet.geometry.spacing;
      for (const auto& [name, st] : {std::pair{"pet", pre.pet_stats}, std::pair{"ct", pre.ct_stats}}) {
        j[name] = {{"mean", st.mean}, {"std", st.std_dev}, {"count", st.count}, {"degenerate", st.degenerate}};
      }
      std::cout << j.dump() << "\n";
    } else if (*fuse) {
      (void)base_config(fuc);
      const LabelVolume lesions = reorient_to_canonical(read_label_volume(fu_lesions));
      const LabelVolume empty(lesions.geometry, kBackground);
      const LabelVolume organs = fu_organs.empty() ? empty : reorient_to_canonical(read_label_volume(fu_organs));
      const LabelVolume bone = fu_bone.empty() ? empty : reorient_to_canonical(read_label_volume(fu_bone));
      const FusionPolicy policy = FusionPolicy::defaults();
      const LabelVolume fused = fuse_labels(bone, organs, lesions, policy);
      ensure_parent(fuc.out);
      write_volume(fused, fuc.out);
      json labels = json::array();
      for (const auto& s : validate_fused(fused, policy.schema).labels)
        labels.push_back({{"label", s.label}, {"name", s.name}, {"voxels", s.voxels}, {"volume_ml", s.volume_ml}});
      std::cout << json{{"out", fuc.out}, {"labels", labels}}.dump() << "\n";
    } else if (*train_cmd) {
      const PipelineConfig cfg = base_config(trc);
      const fs::path manifest = tr_manifest.empty() ? cfg.manifest : fs::path(tr_manifest);
      if (manifest.empty()) throw Error(ErrorCode::ConfigInvalid, "a manifest is required");
      std::vector<TrainingCase> cases;
      for (const auto& s : load_manifest(manifest)) {
        if (!s.gt) throw Error(ErrorCode::ManifestUnreadable, "study '" + s.id + "' has no ground truth");
        const PreprocessParams& params = cfg.preprocess.at(s.tracer.value_or(TracerClass::FDG));
        cases.push_back(prepare_training_case(read_volume(s.pet), read_volume(s.ct), read_label_volume(*s.gt), params));
      }
      SegmenterConfig mc;
      mc.seed = cfg.seed;
      if (tr_patch) mc.patch_size = {*tr_patch, *tr_patch, *tr_patch};
      if (tr_widths) {
        mc.widths = *tr_widths;
        mc.levels = tr_widths->size();
      }
      TrainConfig tc;
      tc.seed = cfg.seed;
      tc.loss = cfg.loss;
      if (tr_epochs) tc.epochs = *tr_epochs;
      if (tr_batch) tc.batch_size = *tr_batch;
      if (tr_lr) tc.learning_rate = *tr_lr;
      if (tr_fg) tc.foreground_fraction = *tr_fg;
      if (tr_workers) tc.workers = *tr_workers;
      const TrainResult result = train(mc, cases, tc);
      ensure_parent(trc.out);
      save_checkpoint(result.model, trc.out);
      const std::string curve_path = tr_curve.empty() ? trc.out + ".curve.json" : tr_curve;
      emit(json{{"loss_curve", result.loss_curve}}, curve_path);
      json j;
      j["checkpoint"] = trc.out;
      j["cases"] = cases.size();
      j["epochs"] = tc.epochs;
      j["initial_loss"] = result.loss_curve.front();
      j["final_loss"] = result.loss_curve.back();
      j["widths"] = split_dims(mc.widths);
      std::cout << j.dump() << "\n";
    } else if (*seg) {
      const PipelineConfig cfg = base_config(sgc);
      SegmenterChoice choice = cfg.segmenter;
      if (!sg_ckpt.empty() || !sg_adapter.empty()) {
        choice.checkpoint = sg_ckpt;
        choice.adapter = sg_adapter;
      }
      if (sg_threshold) choice.threshold = *sg_threshold;
      if (sg_overlap) choice.overlap = *sg_overlap;
      if (choice.checkpoint.empty() == choice.adapter.empty())
        throw Error(ErrorCode::ConfigInvalid, "exactly one of --checkpoint and --adapter is required");
      const TracerClass tracer = parse_tracer(sg_tracer);
      const ImageVolume pet = reorient_to_canonical(read_volume(sg_pet));
      const PreprocessedStudy pre = preprocess_study(pet, reorient_to_canonical(read_volume(sg_ct)),
                                                     cfg.preprocess.at(tracer));
      StudyEntry entry{"cli", sg_pet, sg_ct, {}, {}, {}, tracer};
      LabelVolume mask = make_segmenter(choice)(SegmentationInput{entry, pre, tracer});
      mask.geometry = pre.pet.geometry;
      for (auto& l : mask.labels) l = l != 0 ? kLesion : kBackground;
      LabelVolume pred = resample_labels(mask, pet.geometry);
      pred.schema_id = "binary";
      ensure_parent(sgc.out);
      write_volume(pred, sgc.out);
      const auto voxels = std::count(pred.labels.begin(), pred.labels.end(), kLesion);
      std::cout << json{{"out", sgc.out}, {"tracer", std::string(to_string(tracer))}, {"predicted_voxels", voxels}}.dump()
                << "\n";
    } else if (*eval) {
      const PipelineConfig cfg = base_config(evc);
      const FalseVolumeMode mode = ev_mode.empty() ? cfg.eval_mode : parse_false_volume_mode(ev_mode);
      const Connectivity conn = ev_conn ? parse_connectivity(*ev_conn) : cfg.connectivity;
      LabelVolume pred = reorient_to_canonical(read_label_volume(ev_pred));
      LabelVolume gt = reorient_to_canonical(read_label_volume(ev_gt));
      require_same_geometry(pred.geometry, gt.geometry, "prediction vs ground truth");
      const EvalReport r = evaluate_study(pred, gt, mode, ev_id.empty() ? fs::path(ev_pred).filename().string() : ev_id,
                                          conn);
      json j;
      j["record"] = "study";
      j["id"] = r.study_id;
      j["dice"] = r.dice;
      j["fpvol_ml"] = r.fpvol_ml;
      j["fnvol_ml"] = r.fnvol_ml;
      j["mode"] = std::string(to_string(r.mode));
      j["connectivity"] = static_cast<int>(conn);
      emit(j, evc.out);
    } else if (*pipe) {
      PipelineConfig cfg = base_config(plc);
      if (!pl_manifest.empty()) cfg.manifest = fs::absolute(pl_manifest).lexically_normal();
      if (!plc.out.empty()) cfg.output = fs::absolute(plc.out).lexically_normal();
      if (pl_workers) cfg.workers = *pl_workers;
      const RunReport report = run_pipeline(cfg);
      std::cout << summary_text(report);
      std::cout << "report: " << (cfg.output / "report.jsonl").string() << "\n";
    }
  } catch (const Error& e) {
    std::cerr << "mtseg: " << e.what() << "\n";
    return e.code() == ErrorCode::ConfigInvalid ? 1 : 2;
  } catch (const std::exception& e) {
    std::cerr << "mtseg: internal error: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
