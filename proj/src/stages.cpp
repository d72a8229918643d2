#include "scgan/stages.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <thread>

#include "scgan/checkpoint.hpp"
#include "scgan/log.hpp"
#include "scgan/nifti.hpp"

namespace scgan {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

constexpr std::uint64_t kSplitTag = 0x73706c6974;
constexpr std::uint64_t kAugmentTag = 0x61756700;

void write_json(const fs::path& path, const json& j) {
  fs::create_directories(path.parent_path());
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream f(tmp);
    if (!f) throw IoError("cannot write " + path.string());
    f << j.dump(2) << "\n";
  }
  fs::rename(tmp, path);
}

json read_manifest(const fs::path& path, const std::string& produced_by) {
  if (!fs::exists(path))
    throw PreconditionError("missing " + path.string() + "; run `" + produced_by + "` first");
  std::ifstream in(path);
  return json::parse(in);
}

void write_text(const fs::path& path, const std::string& s) {
  fs::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write " + path.string());
  f << s;
}

struct Scan {
  std::string id;
  fs::path image;
  fs::path labels;
};

std::vector<Scan> discover(const DomainConfig& d) {
  if (!fs::is_directory(d.dir)) throw ValidationError("scan directory " + d.dir.string() + " does not exist");
  std::vector<Scan> scans;
  for (const auto& entry : fs::directory_iterator(d.dir)) {
    const std::string name = entry.path().filename().string();
    if (name.size() <= d.image_suffix.size() ||
        name.compare(name.size() - d.image_suffix.size(), d.image_suffix.size(), d.image_suffix) != 0)
      continue;
    Scan s;
    s.id = name.substr(0, name.size() - d.image_suffix.size());
    s.image = entry.path();
    s.labels = d.dir / (s.id + d.label_suffix);
    if (!fs::exists(s.labels)) throw ValidationError("scan " + s.image.string() + " has no label file " + s.labels.string());
    scans.push_back(std::move(s));
  }
  std::sort(scans.begin(), scans.end(), [](const Scan& a, const Scan& b) { return a.id < b.id; });
  if (scans.empty())
    throw ValidationError("no scans matching *" + d.image_suffix + " in " + d.dir.string());
  return scans;
}

SamplePool pool_from_manifest(const fs::path& dir, const json& entries, Domain d, const LabelSet& labels,
                              Provenance provenance, const std::string& split = "") {
  SamplePool pool;
  for (const auto& e : entries) {
    if (e.at("domain").get<std::string>() != to_string(d)) continue;
    if (!split.empty() && e.value("split", std::string()) != split) continue;
    pool.add_file({dir / e.at("image").get<std::string>(), dir / e.at("labels").get<std::string>(), d, provenance,
                   e.at("id").get<std::string>()},
                  labels);
  }
  return pool;
}

std::vector<Sample> load_all(const SamplePool& pool) {
  std::vector<Sample> out;
  out.reserve(pool.size());
  for (std::size_t i = 0; i < pool.size(); ++i) out.push_back(pool.get(i));
  return out;
}

}  // namespace

void stage_preprocess(const PipelineConfig& c) {
  const Layout layout{c.output_dir};
  json entries = json::array();
  for (Domain d : {Domain::A, Domain::B}) {
    const DomainConfig& dc = c.domain(d);
    const std::vector<Scan> scans = discover(dc);
    for (const auto& [id, _] : dc.crops)
      if (std::none_of(scans.begin(), scans.end(), [&](const Scan& s) { return s.id == id; }))
        throw ValidationError("domains." + to_string(d) + ".crops: no scan with id '" + id + "'");

    // Deterministic split: a seeded shuffle, the first round(n * fraction) go to test.
    std::vector<std::size_t> order(scans.size());
    std::iota(order.begin(), order.end(), 0);
    Rng rng(derive_seed(c.seed, {kSplitTag, static_cast<std::uint64_t>(d)}));
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
    auto n_test = static_cast<std::size_t>(std::lround(c.test_fraction * static_cast<double>(scans.size())));
    n_test = std::min(n_test, scans.size() - 1);
    std::vector<bool> is_test(scans.size(), false);
    for (std::size_t i = 0; i < n_test; ++i) is_test[order[i]] = true;

    for (std::size_t i = 0; i < scans.size(); ++i) {
      const Scan& s = scans[i];
      Volume v = read_volume(s.image);
      LabelMap m = read_labels(s.labels, c.labels);
      if (m.dims != v.dims)
        throw ValidationError("labels " + s.labels.string() + " do not match the shape of " + s.image.string());
      m.affine = v.affine;
      m.spacing = v.spacing;
      if (dc.reorient) {
        v = to_ras(v);
        m = to_ras(m);
      }
      if (auto it = dc.crops.find(s.id); it != dc.crops.end()) std::tie(v, m) = crop(v, m, it->second);
      if (dc.resize_xy) std::tie(v, m) = resize_ct(v, m, *dc.resize_xy);

      const std::string split = is_test[i] ? "test" : "train";
      const std::string rel = to_string(d) + "/" + s.id;
      fs::create_directories(layout.preprocessed() / to_string(d));
      write_volume(v, layout.preprocessed() / (rel + "_img.nii.gz"));
      write_labels(m, layout.preprocessed() / (rel + "_lbl.nii.gz"));
      entries.push_back({{"id", s.id},
                         {"domain", to_string(d)},
                         {"split", split},
                         {"image", rel + "_img.nii.gz"},
                         {"labels", rel + "_lbl.nii.gz"},
                         {"source_image", s.image.string()},
                         {"shape", {v.dims.x, v.dims.y, v.dims.z}}});
    }
    log::info("preprocess: " + to_string(d) + " (" + dc.name + ") " + std::to_string(scans.size() - n_test) +
              " train, " + std::to_string(n_test) + " test");
  }
  write_json(layout.preprocessed() / "manifest.json", {{"kind", "preprocessed"}, {"entries", entries}});
}

DomainPools load_preprocessed(const PipelineConfig& c, const std::string& split) {
  const Layout layout{c.output_dir};
  const json m = read_manifest(layout.preprocessed() / "manifest.json", "preprocess");
  DomainPools pools;
  for (Domain d : {Domain::A, Domain::B})
    pools[d] = pool_from_manifest(layout.preprocessed(), m.at("entries"), d, c.labels, Provenance::original, split);
  return pools;
}

void stage_augment(const PipelineConfig& c) {
  const Layout layout{c.output_dir};
  const DomainPools train = load_preprocessed(c, "train");
  AugmentSpec spec = c.augment;
  spec.seed = derive_seed(c.seed, {kAugmentTag});
  spec.validate();

  std::vector<AugmentRecord> records;
  for (Domain d : {Domain::A, Domain::B}) {
    const std::vector<Sample> sources = load_all(train[d]);
    if (sources.empty()) throw PreconditionError("no training scans for domain " + to_string(d));
    for (const auto& s : sources) check_fold_over(spec.elastic, s.volume.dims);
    std::vector<const Sample*> ptrs;
    for (const auto& s : sources) ptrs.push_back(&s);

    // Batches of `workers` outputs are produced concurrently and written in index order.
    const int workers = std::max(1, spec.workers);
    for (int first = 0; first < spec.n_outputs; first += workers) {
      const int n = std::min(workers, spec.n_outputs - first);
      std::vector<Sample> batch(static_cast<std::size_t>(n));
      std::vector<AugmentRecord> recs(static_cast<std::size_t>(n));
      auto job = [&](int q) {
        batch[static_cast<std::size_t>(q)] = augment_output(ptrs, spec, d, first + q, &recs[static_cast<std::size_t>(q)]);
      };
      if (n == 1) {
        job(0);
      } else {
        std::vector<std::thread> threads;
        for (int q = 0; q < n; ++q) threads.emplace_back(job, q);
        for (auto& t : threads) t.join();
      }
      for (int q = 0; q < n; ++q) {
        write_augmented_sample(layout.augmented(), batch[static_cast<std::size_t>(q)], recs[static_cast<std::size_t>(q)]);
        records.push_back(recs[static_cast<std::size_t>(q)]);
      }
    }
    log::info("augment: " + std::to_string(spec.n_outputs) + " outputs for domain " + to_string(d));
  }
  write_augment_manifest(layout.augmented(), records, spec);
}

void stage_train_seg(const PipelineConfig& c) {
  const DomainPools train = load_preprocessed(c, "train");
  phase1_pretrain_segmentors(train, training_setup(c));
}

void stage_train_gan(const PipelineConfig& c) {
  const DomainPools train = load_preprocessed(c, "train");
  phase2_train_gan(train, training_setup(c));
}

void stage_synthesize(const PipelineConfig& c) {
  const Layout layout{c.output_dir};
  const TrainingSetup setup = training_setup(c);
  const DomainPools train = load_preprocessed(c, "train");
  json outputs = json::array();
  for (Domain from : {Domain::A, Domain::B}) {
    const fs::path gen_path = layout.generator(from);
    if (!fs::exists(gen_path)) throw PreconditionError("missing generator checkpoint " + gen_path.string() + "; run train-gan first");
    const Checkpoint ckpt = load_checkpoint(gen_path);
    const std::string digest = file_digest(gen_path);
    std::vector<Sample> inputs;
    for (std::size_t i = 0; i < train[from].size(); ++i)
      inputs.push_back(training_view(train[from].get(i), setup.normalization));
    const Domain target = other(from);
    const std::vector<Sample> out = synthesize(inputs, ckpt.model, target);
    fs::create_directories(layout.synthesized() / to_string(target));
    for (std::size_t i = 0; i < out.size(); ++i) {
      const std::string rel = to_string(target) + "/" + std::to_string(i);
      write_volume(out[i].volume, layout.synthesized() / (rel + "_img.nii.gz"));
      write_labels(out[i].labels, layout.synthesized() / (rel + "_lbl.nii.gz"));
      outputs.push_back({{"id", out[i].id},
                         {"domain", to_string(target)},
                         {"image", rel + "_img.nii.gz"},
                         {"labels", rel + "_lbl.nii.gz"},
                         {"source", inputs[i].id},
                         {"source_domain", to_string(from)},
                         {"generator", gen_path.filename().string()},
                         {"generator_digest", digest}});
    }
    log::info("synthesize: " + std::to_string(out.size()) + " " + to_string(from) + "->" + to_string(target) + " volumes");
  }
  write_json(layout.synthesized() / "manifest.json", {{"kind", "synthesized"}, {"outputs", outputs}});
}

void stage_train_final(const PipelineConfig& c) {
  const Layout layout{c.output_dir};
  DomainPools pools = load_preprocessed(c, "train");
  const DomainPools validation = load_preprocessed(c, "test");
  if (c.flags.use_preprocess_augment) {
    const json m = read_manifest(layout.augmented() / "manifest.json", "augment");
    for (Domain d : {Domain::A, Domain::B})
      pools[d].append(pool_from_manifest(layout.augmented(), m.at("outputs"), d, c.labels, Provenance::augmented));
  }
  if (c.flags.use_synthesized) {
    const json m = read_manifest(layout.synthesized() / "manifest.json", "synthesize");
    for (Domain d : {Domain::A, Domain::B})
      pools[d].append(pool_from_manifest(layout.synthesized(), m.at("outputs"), d, c.labels, Provenance::synthesized));
  }
  phase3_train_final(pools, validation, training_setup(c));
}

std::vector<DiceReport> stage_evaluate(const PipelineConfig& c, const std::optional<std::vector<EvalMode>>& modes) {
  const Layout layout{c.output_dir};
  const TrainingSetup setup = training_setup(c);
  DomainPools test = load_preprocessed(c, "test");
  std::vector<DiceReport> reports;
  for (Domain d : {Domain::A, Domain::B}) {
    const fs::path ckpt = layout.segmentor(3, d);
    if (!fs::exists(ckpt)) throw PreconditionError("missing final segmentor " + ckpt.string() + "; run train-final first");
    const Model seg = load_checkpoint(ckpt).model;
    SamplePool pool = test[d];
    if (pool.empty()) {
      log::warn("evaluate: no test scans for domain " + to_string(d) + "; reporting on the training split");
      pool = load_preprocessed(c, "train")[d];
    }
    std::vector<LabelMap> pred, truth;
    for (std::size_t i = 0; i < pool.size(); ++i) {
      const Sample s = training_view(pool.get(i), setup.normalization);
      pred.push_back(predict(seg, s.volume, s.labels));
      truth.push_back(s.labels);
      const fs::path out = layout.reports() / "predictions" / to_string(d) / (s.id + "_pred.nii.gz");
      fs::create_directories(out.parent_path());
      write_labels(pred.back(), out);
    }
    for (EvalMode m : modes.value_or(c.eval_modes))
      reports.push_back(evaluate(pred, truth, m, c.domain(d).name, c.run_name));
  }
  std::stable_sort(reports.begin(), reports.end(),
                   [](const DiceReport& a, const DiceReport& b) { return a.mode < b.mode; });
  const ReportTable t = report_table(reports);
  write_text(layout.reports() / "dice.csv", t.csv);
  write_text(layout.reports() / "dice.txt", t.text);
  write_text(layout.reports() / "dice.json", t.json.dump(2) + "\n");
  log::info("\n" + t.text);
  return reports;
}

std::vector<DiceReport> stage_run_all(const PipelineConfig& c) {
  stage_preprocess(c);
  if (c.flags.use_preprocess_augment) stage_augment(c);
  stage_train_seg(c);
  if (c.flags.use_synthesized) {
    stage_train_gan(c);
    stage_synthesize(c);
  } else {
    log::info("run-all: synthesized data disabled, skipping phase 2 and synthesis");
  }
  stage_train_final(c);
  return stage_evaluate(c);
}

void write_phantom_set(const fs::path& dir, const PhantomSetSpec& spec) {
  if (spec.count < 1) throw ValidationError("phantom count must be >= 1");
  json entries = json::array();
  for (Domain d : {Domain::A, Domain::B}) {
    fs::create_directories(dir / to_string(d));
    for (int i = 0; i < spec.count; ++i) {
      PhantomSpec p;
      p.shape = spec.shape;
      p.n_labels = spec.n_labels;
      p.style = d == Domain::A ? ModalityStyle::pseudo_ct : ModalityStyle::pseudo_mri;
      p.seed = derive_seed(spec.seed, {spec.paired ? 0 : static_cast<std::uint64_t>(d) + 1, static_cast<std::uint64_t>(i)});
      const Sample s = generate_phantom(p);
      const std::string rel = to_string(d) + "/" + std::to_string(i);
      write_volume(s.volume, dir / (rel + "_img.nii.gz"));
      write_labels(s.labels, dir / (rel + "_lbl.nii.gz"));
      entries.push_back({{"domain", to_string(d)},
                         {"image", rel + "_img.nii.gz"},
                         {"labels", rel + "_lbl.nii.gz"},
                         {"style", to_string(p.style)},
                         {"phantom_seed", p.seed}});
    }
  }
  json labels = json::array();
  for (const auto& l : phantom_label_set(spec.n_labels)) labels.push_back({{"id", l.id}, {"name", l.name}});
  write_json(dir / "manifest.json", {{"kind", "phantom"},
                                     {"seed", spec.seed},
                                     {"shape", {spec.shape.x, spec.shape.y, spec.shape.z}},
                                     {"n_labels", spec.n_labels},
                                     {"paired", spec.paired},
                                     {"labels", labels},
                                     {"entries", entries}});
}

}  // namespace scgan
