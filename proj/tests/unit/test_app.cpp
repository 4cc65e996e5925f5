#include <filesystem>

#include <gtest/gtest.h>

#include "invoval/config.hpp"
#include "invoval/pipeline.hpp"
#include "invoval/synth.hpp"
#include "invoval/training.hpp"

using namespace invoval;
namespace fs = std::filesystem;

namespace {

ErrorKind kind_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "no error raised";
  return ErrorKind::Io;
}

fs::path scratch(const std::string& name) {
  auto p = fs::temp_directory_path() / ("invoval_app_" + name);
  fs::remove_all(p);
  return p;
}

PipelineConfig single_job() {
  PipelineConfig c;
  c.jobs = 1;
  return c;
}

}  // namespace

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

TEST(Config, DefaultsAreValidAndRoundTrip) {
  PipelineConfig c;
  EXPECT_NO_THROW(validate(c));
  const auto back = config_from_json(to_json(c));
  EXPECT_EQ(to_json(back), to_json(c));
}

TEST(Config, OverlayKeepsUnmentionedValues) {
  PipelineConfig base;
  base.seed = 7;
  const auto c = config_from_json(nlohmann::json{{"score_threshold", 0.3}, {"detection_aug", {{"noise", {{"min", 0.6}}}}}}, base);
  EXPECT_EQ(c.seed, 7u);
  EXPECT_DOUBLE_EQ(c.score_threshold, 0.3);
  EXPECT_DOUBLE_EQ(c.detection_aug.noise.min, 0.6);
  EXPECT_DOUBLE_EQ(c.detection_aug.noise.max, 1.0);
}

TEST(Config, UnknownKeysRejectedAtEveryLevel) {
  EXPECT_EQ(kind_of([] { config_from_json(nlohmann::json{{"sed", 1}}); }), ErrorKind::Config);
  EXPECT_EQ(kind_of([] { config_from_json(nlohmann::json{{"keyword_aug", {{"blur", 1}}}}); }), ErrorKind::Config);
  EXPECT_EQ(kind_of([] { config_from_json(nlohmann::json{{"keyword_aug", {{"jitter", {{"gamma", 1}}}}}}); }), ErrorKind::Config);
  EXPECT_EQ(kind_of([] { config_from_json(nlohmann::json{{"validation", {{"require_stamps", true}}}}); }), ErrorKind::Config);
}

TEST(Config, WrongTypesAndNestedInvariantsAreConfigErrors) {
  EXPECT_EQ(kind_of([] { config_from_json(nlohmann::json{{"seed", "x"}}); }), ErrorKind::Config);
  EXPECT_EQ(kind_of([] { config_from_json(nlohmann::json{{"detection_aug", {{"noise", {{"min", 0.2}}}}}}); }), ErrorKind::Config);
  EXPECT_EQ(kind_of([] { config_from_json(nlohmann::json{{"keyword_aug", {{"median_blur_kernel", 4}}}}); }), ErrorKind::Config);
  EXPECT_EQ(kind_of([] { config_from_json(nlohmann::json{{"window_overlap", 512}}); }), ErrorKind::Config);
  EXPECT_EQ(kind_of([] { config_from_json(nlohmann::json{{"ocr", "magic"}}); }), ErrorKind::Config);
  EXPECT_EQ(kind_of([] { config_from_json(nlohmann::json{{"backends", {{"layout", "torch:x"}}}}); }), ErrorKind::Config);
  EXPECT_EQ(kind_of([] { config_from_json(nlohmann::json::array()); }), ErrorKind::Config);
}

TEST(Config, BackendFlagForms) {
  EXPECT_EQ(parse_backend_flag("mock"), BackendSpec{});
  const auto dir = parse_backend_flag("onnx:/m");
  EXPECT_EQ(dir.layout, "onnx:/m/layout.onnx");
  EXPECT_EQ(dir.detector, "onnx:/m/detector.onnx");
  const auto mixed = parse_backend_flag("detector=onnx:/d.onnx");
  EXPECT_EQ(mixed.layout, "mock");
  EXPECT_EQ(mixed.detector, "onnx:/d.onnx");
  const auto both = parse_backend_flag("layout=onnx:a.onnx,detector=mock");
  EXPECT_EQ(both.layout, "onnx:a.onnx");
  EXPECT_EQ(both.detector, "mock");
  for (const char* bad : {"", "gpu", "layout=", "layout=x", "layout=mock,color=red"})
    EXPECT_EQ(kind_of([&] { parse_backend_flag(bad); }), ErrorKind::Config) << bad;
}

TEST(Config, FingerprintIgnoresOutputDirAndJobsOnly) {
  PipelineConfig a, b;
  b.output_dir = "elsewhere";
  b.jobs = 3;
  EXPECT_EQ(config_fingerprint(a), config_fingerprint(b));
  EXPECT_EQ(config_fingerprint(a).size(), 16u);
  b.seed = 1;
  EXPECT_NE(config_fingerprint(a), config_fingerprint(b));
  PipelineConfig c;
  c.validation.require_stamp = false;
  EXPECT_NE(config_fingerprint(a), config_fingerprint(c));
}

TEST(Config, LoadFromFile) {
  const auto dir = scratch("cfg");
  write_file(dir / "c.json", R"({"seed": 42, "jobs": 2})");
  EXPECT_EQ(load_config(dir / "c.json").seed, 42u);
  write_file(dir / "bad.json", "{seed: 42");
  EXPECT_EQ(kind_of([&] { load_config(dir / "bad.json"); }), ErrorKind::Config);
  fs::remove_all(dir);
}

// ---------------------------------------------------------------------------
// Synthetic fixtures
// ---------------------------------------------------------------------------

TEST(Synth, EmptyFixture) {
  const auto fx = synth_fixture(1, 0);
  EXPECT_TRUE(fx.manifest.records.empty());
  EXPECT_TRUE(fx.plan.empty());
}

TEST(Synth, CompleteDocumentCarriesEveryClassInsideTheImage) {
  const auto fx = synth_fixture(3, 1);
  const auto& r = fx.manifest.records[0];
  std::set<FieldClass> seen;
  for (const auto& a : r.annotations) {
    seen.insert(a.field_class);
    EXPECT_TRUE(a.box.valid());
    EXPECT_LE(a.box.x_max, r.image->width());
    EXPECT_LE(a.box.y_max, r.image->height());
    EXPECT_EQ(a.text.has_value(), is_text_field(a.field_class));
  }
  EXPECT_EQ(seen.size(), 7u);
  EXPECT_EQ(fx.plan[0].expected_verdict, Verdict::Valid);
}

TEST(Synth, OmissionsFollowThePlan) {
  const auto fx = synth_fixture(5, 10, standard_plan_options(10));
  for (std::size_t i = 0; i < 10; ++i) {
    const auto& rec = fx.manifest.records[i];
    const auto& plan = fx.plan[i];
    for (const auto& a : rec.annotations) EXPECT_FALSE(plan.omitted.contains(a.field_class)) << rec.id;
    EXPECT_EQ(rec.handwritten, i == 9);
  }
  EXPECT_EQ(fx.plan[1].omitted, std::set<FieldClass>{FieldClass::Stamp});
  EXPECT_EQ(fx.plan[1].expected_verdict, Verdict::Invalid);
  EXPECT_EQ(fx.plan[3].omitted, std::set<FieldClass>{FieldClass::Date});
  EXPECT_EQ(fx.plan[9].expected_verdict, Verdict::Unsupported);
  EXPECT_EQ(fx.plan[0].expected_verdict, Verdict::Valid);
}

TEST(Synth, DeterministicPerSeed) {
  SynthOptions o = standard_plan_options(4);
  o.max_skew_deg = 4;
  o.blur_probability = 0.5;
  const auto a = synth_fixture(11, 4, o), b = synth_fixture(11, 4, o), c = synth_fixture(12, 4, o);
  EXPECT_EQ(serialize_manifest(a.manifest), serialize_manifest(b.manifest));
  EXPECT_EQ(plan_to_json(a).dump(), plan_to_json(b).dump());
  for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(*a.manifest.records[i].image, *b.manifest.records[i].image);
  EXPECT_NE(serialize_manifest(a.manifest), serialize_manifest(c.manifest));
}

TEST(Synth, SkewKeepsBoxesOnTheExpandedPage) {
  SynthOptions o;
  o.max_skew_deg = 8;
  const auto fx = synth_fixture(2, 6, o);
  for (std::size_t i = 0; i < 6; ++i) {
    const auto& r = fx.manifest.records[i];
    EXPECT_LE(std::abs(fx.plan[i].skew_deg), 8.0);
    for (const auto& a : r.annotations) {
      EXPECT_TRUE(a.box.valid());
      EXPECT_LE(a.box.x_max, r.image->width());
      EXPECT_LE(a.box.y_max, r.image->height());
    }
  }
}

TEST(Synth, WrittenFixtureReloads) {
  const auto dir = scratch("synth");
  const auto fx = synth_fixture(9, 3, standard_plan_options(3));
  write_fixture(fx, dir);
  const auto m = load_manifest(dir / "manifest.json");
  ASSERT_EQ(m.records.size(), 3u);
  EXPECT_EQ(*m.records[2].image, *fx.manifest.records[2].image);
  EXPECT_TRUE(fs::exists(dir / "plan.json"));
  const auto tokens = parse_local_engine_output(read_file(dir / "ocr" / "doc-0000.tsv"));
  EXPECT_FALSE(tokens.empty());
  fs::remove_all(dir);
}

TEST(Synth, OptionsFile) {
  const auto o = synth_options_from_json(nlohmann::json::parse(R"({"standard_plan": true, "omit": {"0": ["Title"]}, "max_skew_deg": 3})"), 5);
  EXPECT_EQ(o.omit.at(0), std::set<FieldClass>{FieldClass::Title});
  EXPECT_EQ(o.omit.at(1), std::set<FieldClass>{FieldClass::Stamp});
  EXPECT_DOUBLE_EQ(o.max_skew_deg, 3);
  EXPECT_EQ(kind_of([] { synth_options_from_json(nlohmann::json{{"pages", 2}}, 1); }), ErrorKind::Config);
  EXPECT_EQ(kind_of([] { synth_options_from_json(nlohmann::json{{"omit", {{"0", {"Logo"}}}}}, 1); }), ErrorKind::Config);
}

// ---------------------------------------------------------------------------
// Pipeline
// ---------------------------------------------------------------------------

TEST(Pipeline, VerdictsMatchThePlan) {
  const auto fx = synth_fixture(21, 10, standard_plan_options(10));
  const auto run = run_pipeline(single_job(), fx.manifest);
  EXPECT_EQ(run.exit_code(), 0);
  ASSERT_EQ(run.reports.size(), 10u);
  for (std::size_t i = 0; i < 10; ++i) {
    EXPECT_EQ(run.reports[i].document_id, fx.plan[i].id);
    EXPECT_EQ(run.reports[i].verdict, fx.plan[i].expected_verdict) << fx.plan[i].id;
    EXPECT_EQ(run.reports[i].config_fingerprint, run.fingerprint);
  }
  // Mock backends replay gold, so the evaluations are perfect.
  EXPECT_DOUBLE_EQ(run.token_eval.micro.f1(), 1.0);
  EXPECT_DOUBLE_EQ(run.detection_eval.map50, 1.0);
}

TEST(Pipeline, EmptyManifest) {
  const auto run = run_pipeline(single_job(), DatasetManifest{});
  EXPECT_TRUE(run.reports.empty());
  EXPECT_EQ(run.exit_code(), 0);
}

TEST(Pipeline, UnknownBackendFailsBeforeAnyDocument) {
  auto c = single_job();
  c.backends.detector = "onnx:/nonexistent/model.onnx";
  const auto fx = synth_fixture(1, 2);
  EXPECT_EQ(kind_of([&] { run_pipeline(c, fx.manifest); }), ErrorKind::Config);
  c = single_job();
  c.ocr = "recorded-tsv:/nonexistent";
  EXPECT_EQ(kind_of([&] { run_pipeline(c, fx.manifest); }), ErrorKind::Config);
}

TEST(Pipeline, FailureIsIsolatedToItsDocument) {
  auto fx = synth_fixture(4, 4);
  fx.manifest.records[1].image.reset();
  const auto run = run_pipeline(single_job(), fx.manifest);
  EXPECT_EQ(run.exit_code(), 1);
  ASSERT_EQ(run.failures.size(), 1u);
  EXPECT_EQ(run.failures[0].document_id, "doc-0001");
  EXPECT_EQ(run.failures[0].kind, "ImageLoad");
  EXPECT_EQ(run.reports.size(), 3u);
}

TEST(Pipeline, ReportsAreByteIdenticalAcrossRunsAndJobCounts) {
  const auto fx = synth_fixture(8, 8, standard_plan_options(8));
  auto c1 = single_job();
  auto c4 = single_job();
  c4.jobs = 4;
  const auto d1 = scratch("run1"), d2 = scratch("run2");
  write_run(run_pipeline(c1, fx.manifest), c1, d1);
  write_run(run_pipeline(c4, fx.manifest), c4, d2);
  for (const auto& e : fs::directory_iterator(d1 / "reports"))
    EXPECT_EQ(read_file(e.path()), read_file(d2 / "reports" / e.path().filename())) << e.path();
  EXPECT_EQ(read_file(d1 / "summary.json"), read_file(d2 / "summary.json"));
  const auto run = nlohmann::json::parse(read_file(d1 / "run.json"));
  EXPECT_TRUE(run.contains("stage_ms"));
  EXPECT_EQ(run.at("config_fingerprint"), config_fingerprint(c1));
  fs::remove_all(d1);
  fs::remove_all(d2);
}

TEST(Pipeline, RecordedTsvMatchesMockOcr) {
  const auto dir = scratch("recorded");
  const auto fx = synth_fixture(6, 5, standard_plan_options(5));
  write_fixture(fx, dir);
  auto c = single_job();
  c.ocr = "recorded-tsv:" + (dir / "ocr").string();
  const auto recorded = run_pipeline(c, load_manifest(dir / "manifest.json"));
  const auto mock = run_pipeline(single_job(), fx.manifest);
  ASSERT_EQ(recorded.reports.size(), mock.reports.size());
  for (std::size_t i = 0; i < mock.reports.size(); ++i) EXPECT_EQ(recorded.reports[i].verdict, mock.reports[i].verdict);
  fs::remove_all(dir);
}

// ---------------------------------------------------------------------------
// Training configuration export
// ---------------------------------------------------------------------------

TEST(TrainingExport, LayoutTrack) {
  const auto j = to_json(training_config("layout"));
  EXPECT_EQ(j.at("epochs"), 50);
  EXPECT_EQ(j.at("batch_size"), 4);
  EXPECT_EQ(j.at("optimizer"), "Adam");
  EXPECT_EQ(j.at("weight_decay").get<double>(), 1e-3);
  EXPECT_EQ(j.at("learning_rate").get<double>(), 5e-5);
  EXPECT_FALSE(j.contains("momentum"));
}

TEST(TrainingExport, DetectionTrack) {
  const auto j = to_json(training_config("detection"));
  EXPECT_EQ(j.at("epochs"), 50);
  EXPECT_EQ(j.at("batch_size"), 8);
  EXPECT_EQ(j.at("momentum").get<double>(), 0.9);
  EXPECT_EQ(j.at("weight_decay").get<double>(), 5e-4);
  EXPECT_EQ(j.at("learning_rate").get<double>(), 1e-3);
  EXPECT_TRUE(j.at("optimizer").is_null());
}

TEST(TrainingExport, UnknownTrackIsUsageError) {
  EXPECT_EQ(kind_of([] { training_config("ocr"); }), ErrorKind::Usage);
}
