// invoval: command-line front end. Every subcommand reads and writes files,
// so stages compose and intermediate results stay inspectable.
//
// Exit codes: 0 success, 1 one or more documents failed, 2 configuration or
// usage error.

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "invoval/augment.hpp"
#include "invoval/config.hpp"
#include "invoval/labeling.hpp"
#include "invoval/manifest.hpp"
#include "invoval/metrics.hpp"
#include "invoval/pipeline.hpp"
#include "invoval/synth.hpp"
#include "invoval/training.hpp"

namespace fs = std::filesystem;
using namespace invoval;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitDocumentFailures = 1;
constexpr int kExitConfig = 2;

struct GlobalFlags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string backend;
  std::string out;
  std::optional<int> jobs;
};

/// Defaults, then the config file, then flags.
PipelineConfig effective_config(const GlobalFlags& g) {
  PipelineConfig c;
  if (!g.config.empty()) c = load_config(g.config);
  if (g.seed) c.seed = *g.seed;
  if (!g.backend.empty()) c.backends = parse_backend_flag(g.backend, c.backends);
  if (!g.out.empty()) c.output_dir = g.out;
  if (g.jobs) c.jobs = *g.jobs;
  validate(c);
  return c;
}

void report_failure(const std::string& id, const std::exception& e) { std::cerr << "document " << id << ": " << e.what() << "\n"; }

// ---------------------------------------------------------------------------

int cmd_synth(const PipelineConfig& cfg, std::size_t n, const std::string& options_path, bool standard) {
  SynthOptions opt = standard ? standard_plan_options(n) : SynthOptions{};
  if (!options_path.empty()) {
    const auto j = nlohmann::json::parse(read_file(options_path), nullptr, false);
    if (j.is_discarded()) throw Error(ErrorKind::Config, "synth options '" + options_path + "' are not valid JSON");
    opt = synth_options_from_json(j, n);
    if (standard) {
      const auto base = standard_plan_options(n);
      for (const auto& [i, s] : base.omit) opt.omit.try_emplace(i, s);
      opt.handwritten.insert(base.handwritten.begin(), base.handwritten.end());
    }
  }
  const auto fx = synth_fixture(cfg.seed, n, opt);
  write_fixture(fx, cfg.output_dir);
  std::cout << "wrote " << n << " documents to " << cfg.output_dir << "\n";
  return kExitOk;
}

int cmd_augment(const PipelineConfig& cfg, const std::string& manifest_path, const std::string& track) {
  if (track != "keyword" && track != "detection") throw Error(ErrorKind::Usage, "--track must be keyword or detection");
  const auto manifest = load_manifest(manifest_path);
  DatasetManifest out{manifest.split, {}};
  std::string traces;
  int failures = 0;
  for (const auto& rec : manifest.records) {
    if (rec.handwritten) {  // outside the augmentation contract; not a failure
      traces += nlohmann::json{{"id", rec.id}, {"skipped", "handwritten"}}.dump() + "\n";
      continue;
    }
    try {
      auto res = track == "keyword" ? augment_keyword(rec, cfg.keyword_aug, cfg.seed) : augment_detection(rec, cfg.detection_aug, cfg.seed);
      res.record.image_path = "images/" + rec.id + ".png";
      traces += nlohmann::json{{"id", rec.id}, {"trace", to_json(res.trace)}}.dump() + "\n";
      out.records.push_back(std::move(res.record));
    } catch (const Error& e) {
      report_failure(rec.id, e);
      traces += nlohmann::json{{"id", rec.id}, {"error", std::string(to_string(e.kind()))}}.dump() + "\n";
      ++failures;
    }
  }
  write_manifest(out, cfg.output_dir);
  write_file(fs::path(cfg.output_dir) / "trace.jsonl", traces);
  std::cout << "augmented " << out.records.size() << " of " << manifest.records.size() << " documents (" << track << " track)\n";
  return failures ? kExitDocumentFailures : kExitOk;
}

int cmd_ocr(const PipelineConfig& cfg, const std::string& manifest_path, const std::string& format) {
  if (format != "tsv" && format != "read") throw Error(ErrorKind::Usage, "--format must be tsv or read");
  const auto manifest = load_manifest(manifest_path);
  auto engine = make_ocr_engine(cfg, manifest);
  int failures = 0;
  for (const auto& rec : manifest.records) {
    try {
      const auto tokens = sort_reading_order(engine->analyze(*rec.image, rec.id));
      const auto dir = fs::path(cfg.output_dir) / "ocr";
      if (format == "tsv") write_file(dir / (rec.id + ".tsv"), format_local_engine_output(tokens));
      else write_file(dir / (rec.id + ".json"), format_cloud_read_response(tokens, rec.image->width(), rec.image->height()));
    } catch (const Error& e) {
      report_failure(rec.id, e);
      ++failures;
    }
  }
  return failures ? kExitDocumentFailures : kExitOk;
}

int cmd_label(const PipelineConfig& cfg, const std::string& manifest_path, const std::string& source) {
  const auto manifest = load_manifest(manifest_path);
  auto engine = make_ocr_engine(cfg, manifest);
  std::vector<SequenceExample> examples;
  std::vector<std::vector<LabeledToken>> docs;
  int failures = 0;
  for (const auto& rec : manifest.records) {
    if (rec.handwritten) continue;
    try {
      const auto tokens = sort_reading_order(engine->analyze(*rec.image, rec.id));
      auto labeled = assign_labels(tokens, rec.annotations, cfg.label_overlap);
      auto windows = build_sequence_examples(rec.id, labeled, rec.image->width(), rec.image->height(),
                                             static_cast<std::size_t>(cfg.max_sequence_length),
                                             static_cast<std::size_t>(cfg.window_overlap));
      examples.insert(examples.end(), windows.begin(), windows.end());
      docs.push_back(std::move(labeled));
    } catch (const Error& e) {
      report_failure(rec.id, e);
      ++failures;
    }
  }
  const InstanceCountRow row{source.empty() ? engine->name() : source, count_label_instances(docs)};
  write_file(fs::path(cfg.output_dir) / "examples.jsonl", to_jsonl(examples));
  write_file(fs::path(cfg.output_dir) / "label_counts.json", instance_counts_to_json(row).dump(2) + "\n");
  std::cout << render_instance_table({row});
  return failures ? kExitDocumentFailures : kExitOk;
}

int cmd_stats(const std::vector<std::string>& counts_files, const std::vector<std::string>& example_files, const std::string& source,
              const std::string& out) {
  std::vector<InstanceCountRow> rows;
  for (const auto& f : counts_files) {
    const auto j = nlohmann::json::parse(read_file(f), nullptr, false);
    if (j.is_discarded()) throw Error(ErrorKind::Config, "'" + f + "' is not valid JSON");
    if (j.is_array())
      for (const auto& r : j) rows.push_back(instance_counts_from_json(r));
    else
      rows.push_back(instance_counts_from_json(j));
  }
  for (const auto& f : example_files) {
    ClassCounts counts;
    for (const auto& [_, labels] : flatten_labels(parse_jsonl(read_file(f)))) counts += count_labels(labels);
    rows.push_back({source.empty() ? fs::path(f).stem().string() : source, counts});
  }
  if (rows.empty()) throw Error(ErrorKind::Usage, "stats needs --counts or --examples");
  const auto table = render_instance_table(rows);
  std::cout << table;
  if (!out.empty()) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& r : rows) arr.push_back(instance_counts_to_json(r));
    write_file(fs::path(out) / "instance_counts.json", arr.dump(2) + "\n");
    write_file(fs::path(out) / "instance_counts.txt", table);
  }
  return kExitOk;
}

int cmd_eval_tokens(const std::string& gold_path, const std::string& pred_path, const std::string& method, const std::string& out) {
  const auto gold = flatten_labels(parse_jsonl(read_file(gold_path)));
  const auto pred = flatten_labels(parse_jsonl(read_file(pred_path)));
  std::vector<FieldClass> g, p;
  for (const auto& [id, labels] : gold) {
    auto it = pred.find(id);
    if (it == pred.end()) throw Error(ErrorKind::LengthMismatch, "no predictions for document '" + id + "'");
    if (it->second.size() != labels.size())
      throw Error(ErrorKind::LengthMismatch, "document '" + id + "': " + std::to_string(it->second.size()) + " predicted vs " +
                                                 std::to_string(labels.size()) + " gold tokens");
    g.insert(g.end(), labels.begin(), labels.end());
    p.insert(p.end(), it->second.begin(), it->second.end());
  }
  const auto rep = precision_recall_f1(p, g);
  const auto table = render_token_table(method, rep);
  std::cout << table;
  if (!out.empty()) {
    write_file(fs::path(out) / "token_eval.json", to_json(rep).dump(2) + "\n");
    write_file(fs::path(out) / "token_eval.txt", table);
  }
  return kExitOk;
}

int cmd_eval_detect(const std::string& manifest_path, const std::string& dets_path, const std::string& model, const std::string& out) {
  const auto manifest = load_manifest(manifest_path);
  const auto j = nlohmann::json::parse(read_file(dets_path), nullptr, false);
  if (j.is_discarded()) throw Error(ErrorKind::Config, "'" + dets_path + "' is not valid JSON");
  const auto dets = detections_from_json(j);
  std::vector<ImageEvalInput> inputs;
  for (const auto& rec : manifest.records) {
    if (rec.handwritten) continue;
    auto it = dets.find(rec.id);
    inputs.push_back({rec.id, it == dets.end() ? std::vector<Detection>{} : it->second, rec.annotations});
  }
  const auto rep = mean_ap(inputs);
  const auto table = render_detection_table(model, rep);
  std::cout << table;
  if (!out.empty()) {
    write_file(fs::path(out) / "detection_eval.json", to_json(rep).dump(2) + "\n");
    write_file(fs::path(out) / "detection_eval.txt", table);
  }
  return kExitOk;
}

int cmd_validate(const PipelineConfig& cfg, const std::string& manifest_path, bool explain_flag) {
  const auto manifest = load_manifest(manifest_path);
  const auto backends = make_backends(cfg, manifest);
  const auto run = run_pipeline(cfg, manifest, backends);
  write_run(run, cfg, cfg.output_dir);
  for (const auto& r : run.reports) {
    std::cout << r.document_id << ": " << to_string(r.verdict) << "\n";
    if (explain_flag)
      for (const auto& line : explain(r)) std::cout << "  " << line << "\n";
  }
  for (const auto& f : run.failures) std::cerr << "document " << f.document_id << " failed (" << f.kind << "): " << f.message << "\n";
  return run.exit_code();
}

int cmd_export_train_config(const std::string& track, const std::string& out) {
  const auto j = to_json(training_config(track));
  if (out.empty()) {
    std::cout << j.dump(2) << "\n";
  } else {
    write_file(fs::path(out) / ("train_" + track + ".json"), j.dump(2) + "\n");
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Invoice validity pipeline: augmentation, OCR, labeling, evaluation and validation"};
  app.require_subcommand(1);
  app.fallthrough();
  GlobalFlags g;
  app.add_option("--config", g.config, "JSON config file");
  app.add_option("--seed", g.seed, "master seed (overrides the config file)");
  app.add_option("--backend", g.backend, "mock | onnx:<dir> | layout=<desc>,detector=<desc>");
  app.add_option("--out", g.out, "output directory");
  app.add_option("--jobs", g.jobs, "worker count; 0 = available parallelism")->check(CLI::NonNegativeNumber);

  std::function<int()> action;

  auto* synth = app.add_subcommand("synth", "render a synthetic fixture");
  std::size_t n_docs = 20;
  std::string synth_options;
  bool standard_plan = false;
  synth->add_option("-n,--docs", n_docs, "number of documents");
  synth->add_option("--options", synth_options, "plan options JSON");
  synth->add_flag("--standard-plan", standard_plan, "omit stamp, signature and Date in a fixed cycle");
  synth->callback([&] { action = [&] { return cmd_synth(effective_config(g), n_docs, synth_options, standard_plan); }; });

  std::string manifest;
  auto* augment = app.add_subcommand("augment", "augment a manifest");
  std::string track = "keyword";
  augment->add_option("--manifest", manifest, "input manifest")->required();
  augment->add_option("--track", track, "keyword | detection");
  augment->callback([&] { action = [&] { return cmd_augment(effective_config(g), manifest, track); }; });

  auto* ocr = app.add_subcommand("ocr", "run the configured OCR engine");
  std::string ocr_format = "tsv";
  ocr->add_option("--manifest", manifest, "input manifest")->required();
  ocr->add_option("--format", ocr_format, "tsv | read");
  ocr->callback([&] { action = [&] { return cmd_ocr(effective_config(g), manifest, ocr_format); }; });

  auto* label = app.add_subcommand("label", "label OCR tokens and build sequence examples");
  std::string source;
  label->add_option("--manifest", manifest, "input manifest")->required();
  label->add_option("--source", source, "row name for the instance table");
  label->callback([&] { action = [&] { return cmd_label(effective_config(g), manifest, source); }; });

  auto* stats = app.add_subcommand("stats", "render class instance tables");
  std::vector<std::string> counts_files, example_files;
  stats->add_option("--counts", counts_files, "instance count JSON files");
  stats->add_option("--examples", example_files, "sequence example JSONL files");
  stats->add_option("--source", source, "row name for --examples input");
  stats->callback([&] { action = [&] { return cmd_stats(counts_files, example_files, source, g.out); }; });

  auto* eval_tokens = app.add_subcommand("eval-tokens", "token classification precision, recall and F1");
  std::string gold, pred, method = "model";
  eval_tokens->add_option("--gold", gold, "gold sequence examples (JSONL)")->required();
  eval_tokens->add_option("--pred", pred, "predicted sequence examples (JSONL)")->required();
  eval_tokens->add_option("--method", method, "row name");
  eval_tokens->callback([&] { action = [&] { return cmd_eval_tokens(gold, pred, method, g.out); }; });

  auto* eval_detect = app.add_subcommand("eval-detect", "detection mAP against manifest annotations");
  std::string dets;
  eval_detect->add_option("--manifest", manifest, "gold manifest")->required();
  eval_detect->add_option("--detections", dets, "detections JSON keyed by document id")->required();
  eval_detect->add_option("--model", method, "row name");
  eval_detect->callback([&] { action = [&] { return cmd_eval_detect(manifest, dets, method, g.out); }; });

  auto* validate_cmd = app.add_subcommand("validate", "run the full pipeline and write validity reports");
  bool explain_flag = false;
  validate_cmd->add_option("--manifest", manifest, "input manifest")->required();
  validate_cmd->add_flag("--explain", explain_flag, "print one line per criterion");
  validate_cmd->callback([&] { action = [&] { return cmd_validate(effective_config(g), manifest, explain_flag); }; });

  auto* export_cmd = app.add_subcommand("export-train-config", "write optimizer settings for external trainers");
  std::string train_track;
  export_cmd->add_option("--track", train_track, "layout | detection")->required();
  export_cmd->callback([&] { action = [&] { return cmd_export_train_config(train_track, g.out); }; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  try {
    return action();
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  }
}
