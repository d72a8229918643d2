#include "scgan/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "scgan/checkpoint.hpp"
#include "scgan/evaluation.hpp"
#include "scgan/log.hpp"
#include "scgan/nifti.hpp"

namespace scgan {

using nlohmann::json;

namespace {

// Stream tags for derive_seed.
constexpr std::uint64_t kInit = 0x696e6974;
constexpr std::uint64_t kOrder = 0x6f72646572;
constexpr std::uint64_t kSegmentorNet = 1;
constexpr std::uint64_t kGeneratorNet = 2;
constexpr std::uint64_t kDiscriminatorNet = 3;

std::uint64_t tag(Domain d) { return d == Domain::A ? 0 : 1; }

void scale(std::vector<double>& v, double s) {
  for (double& x : v) x *= s;
}

void scale(Tensor& t, double s) { scale(t.data, s); }

json report_json(const LossReport& r) {
  return {{"adv", r.adv}, {"cycle", r.cycle}, {"spatial", r.spatial}, {"ce", r.ce}, {"dice", r.dice}, {"total", r.total}};
}

std::function<bool(const json&)> before_epoch(int start) {
  return [start](const json& line) {
    const int e = line.value("epoch", -1);
    return e >= 0 && e < start;
  };
}

}  // namespace

void PhasePlan::collect_violations(std::vector<std::string>& out, const std::string& prefix) const {
  for (const auto& [name, v] : {std::pair{"phase1_epochs", phase1_epochs}, {"phase2_warmup_epochs", phase2_warmup_epochs},
                                {"phase2_spatial_epochs", phase2_spatial_epochs}, {"phase3_epochs", phase3_epochs}})
    if (v < 0) out.push_back(prefix + "." + name + ": epoch counts must be >= 0");
  if (!(learning_rate > 0.0)) out.push_back(prefix + ".learning_rate: must be > 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0))
    out.push_back(prefix + ".betas: must lie in [0, 1)");
  if (batch_size < 1) out.push_back(prefix + ".batch_size: must be >= 1");
  if (iterations_per_epoch < 0) out.push_back(prefix + ".iterations_per_epoch: must be >= 0");
  if (gan_iterations_per_epoch < 0) out.push_back(prefix + ".gan_iterations_per_epoch: must be >= 0");
  if (!(foreground_probability >= 0.0 && foreground_probability <= 1.0))
    out.push_back(prefix + ".foreground_probability: must lie in [0, 1]");
  for (int a = 0; a < 3; ++a)
    if (patch_size[a] < 32 || patch_size[a] % 32 != 0) {
      out.push_back(prefix + ".patch_size: patch dims divisible by 32 (got " + patch_size.str() + ")");
      break;
    }
}

json to_json(const PhasePlan& p) {
  return {{"phase1_epochs", p.phase1_epochs},
          {"phase2_warmup_epochs", p.phase2_warmup_epochs},
          {"phase2_spatial_epochs", p.phase2_spatial_epochs},
          {"phase3_epochs", p.phase3_epochs},
          {"learning_rate", p.learning_rate},
          {"betas", {p.beta1, p.beta2}},
          {"batch_size", p.batch_size},
          {"patch_size", {p.patch_size.x, p.patch_size.y, p.patch_size.z}},
          {"iterations_per_epoch", p.iterations_per_epoch},
          {"gan_iterations_per_epoch", p.gan_iterations_per_epoch},
          {"foreground_probability", p.foreground_probability},
          {"phase3_from_phase1", p.phase3_from_phase1}};
}

PhasePlan phase_plan_from_json(const json& j) {
  PhasePlan p;
  p.phase1_epochs = j.value("phase1_epochs", p.phase1_epochs);
  p.phase2_warmup_epochs = j.value("phase2_warmup_epochs", p.phase2_warmup_epochs);
  p.phase2_spatial_epochs = j.value("phase2_spatial_epochs", p.phase2_spatial_epochs);
  p.phase3_epochs = j.value("phase3_epochs", p.phase3_epochs);
  p.learning_rate = j.value("learning_rate", p.learning_rate);
  if (j.contains("betas")) {
    const auto b = j["betas"].get<std::vector<double>>();
    if (b.size() != 2) throw ValidationError("plan.betas: expected two values");
    p.beta1 = b[0];
    p.beta2 = b[1];
  }
  p.batch_size = j.value("batch_size", p.batch_size);
  if (j.contains("patch_size")) {
    const auto ps = j["patch_size"].get<std::vector<int>>();
    if (ps.size() != 3) throw ValidationError("plan.patch_size: expected three values");
    p.patch_size = {ps[0], ps[1], ps[2]};
  }
  p.iterations_per_epoch = j.value("iterations_per_epoch", p.iterations_per_epoch);
  p.gan_iterations_per_epoch = j.value("gan_iterations_per_epoch", p.gan_iterations_per_epoch);
  p.foreground_probability = j.value("foreground_probability", p.foreground_probability);
  p.phase3_from_phase1 = j.value("phase3_from_phase1", p.phase3_from_phase1);
  return p;
}

json to_json(const AblationFlags& f) {
  return {{"use_preprocess_augment", f.use_preprocess_augment},
          {"use_synthesized", f.use_synthesized},
          {"use_shape_consistency", f.use_shape_consistency}};
}

AblationFlags ablation_flags_from_json(const json& j) {
  AblationFlags f;
  f.use_preprocess_augment = j.value("use_preprocess_augment", f.use_preprocess_augment);
  f.use_synthesized = j.value("use_synthesized", f.use_synthesized);
  f.use_shape_consistency = j.value("use_shape_consistency", f.use_shape_consistency);
  return f;
}

// ---- data ----

void SamplePool::add(Sample s) {
  Entry e;
  e.provenance = s.provenance;
  e.sample = std::make_shared<const Sample>(std::move(s));
  entries_.push_back(std::move(e));
}

void SamplePool::add_file(FileEntry f, LabelSet label_set) {
  Entry e;
  e.provenance = f.provenance;
  e.file = std::move(f);
  e.label_set = std::move(label_set);
  entries_.push_back(std::move(e));
}

void SamplePool::append(const SamplePool& other) {
  entries_.insert(entries_.end(), other.entries_.begin(), other.entries_.end());
}

Sample SamplePool::get(std::size_t i) const {
  const Entry& e = entries_.at(i);
  if (e.sample) return *e.sample;
  Sample s;
  s.volume = read_volume(e.file.image);
  s.labels = read_labels(e.file.labels, e.label_set);
  s.domain = e.file.domain;
  s.provenance = e.file.provenance;
  s.id = e.file.id;
  s.validate();
  return s;
}

std::size_t SamplePool::count(Provenance p) const {
  return static_cast<std::size_t>(
      std::count_if(entries_.begin(), entries_.end(), [p](const Entry& e) { return e.provenance == p; }));
}

SamplePool SamplePool::filtered(const std::vector<Provenance>& keep) const {
  SamplePool out;
  for (const auto& e : entries_)
    if (std::find(keep.begin(), keep.end(), e.provenance) != keep.end()) out.entries_.push_back(e);
  return out;
}

std::filesystem::path Layout::segmentor(int phase, Domain d) const {
  return checkpoints() / ("phase" + std::to_string(phase) + "_seg_" + to_string(d) + ".ckpt");
}

std::filesystem::path Layout::generator(Domain from) const {
  return checkpoints() / ("gen_" + to_string(from) + "to" + to_string(other(from)) + ".ckpt");
}

std::filesystem::path Layout::discriminator(Domain d) const {
  return checkpoints() / ("disc_" + to_string(d) + ".ckpt");
}

std::filesystem::path Layout::log(const std::string& name) const { return logs() / (name + ".jsonl"); }

JsonlLog::JsonlLog(const std::filesystem::path& path, const std::function<bool(const json&)>& keep) {
  std::vector<json> kept;
  if (std::filesystem::exists(path))
    for (auto& line : read_jsonl(path))
      if (keep(line)) kept.push_back(std::move(line));
  std::filesystem::create_directories(path.parent_path());
  out_.open(path, std::ios::trunc);
  if (!out_) throw IoError("cannot write log " + path.string());
  for (const auto& line : kept) out_ << line.dump() << "\n";
  out_.flush();
}

void JsonlLog::write(const json& line) {
  if (!out_.is_open()) return;
  out_ << line.dump() << "\n";
  out_.flush();
}

std::vector<json> read_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path.string());
  std::vector<json> lines;
  std::string line;
  while (std::getline(in, line))
    if (!line.empty()) lines.push_back(json::parse(line));
  return lines;
}

Tensor to_tensor(const Volume& v) {
  Tensor t(1, v.dims);
  std::copy(v.data.begin(), v.data.end(), t.data.begin());
  return t;
}

std::vector<int> to_classes(const LabelMap& m) {
  std::vector<int> out(m.data.size(), 0);
  for (std::size_t i = 0; i < m.data.size(); ++i) {
    const std::int32_t v = m.data[i];
    if (v == 0) continue;
    int c = 0;
    for (std::size_t q = 0; q < m.label_set.size(); ++q)
      if (m.label_set[q].id == v) c = static_cast<int>(q) + 1;
    if (c == 0) throw ValidationError("label value " + std::to_string(v) + " is not in the label set");
    out[i] = c;
  }
  return out;
}

LabelMap from_classes(const std::vector<int>& classes, const LabelMap& like) {
  LabelMap m = like;
  if (classes.size() != m.data.size()) throw ShapeError("class map size does not match label grid");
  for (std::size_t i = 0; i < classes.size(); ++i)
    m.data[i] = classes[i] == 0 ? 0 : m.label_set.at(static_cast<std::size_t>(classes[i] - 1)).id;
  return m;
}

Sample training_view(const Sample& s, const NormalizationSpec& norm) {
  if (s.provenance != Provenance::original) return s;
  Sample out = s;
  out.volume = normalize(s.volume, norm);
  return out;
}

Patch sample_patch(const Sample& s, const Dims& patch, double foreground_probability, Rng& rng) {
  const Dims& d = s.volume.dims;
  for (int a = 0; a < 3; ++a) {
    if (patch[a] > d[a]) throw ValidationError("patch " + patch.str() + " is larger than volume " + d.str());
    if (patch[a] < 1 || patch[a] % 32 != 0) throw ShapeError("patch dims must be divisible by 32, got " + patch.str());
  }
  std::array<int, 3> origin{0, 0, 0};
  const bool want_fg = rng.uniform() < foreground_probability;
  std::vector<std::size_t> fg;
  if (want_fg)
    for (std::size_t i = 0; i < s.labels.data.size(); ++i)
      if (s.labels.data[i] != 0) fg.push_back(i);
  if (!fg.empty()) {
    const std::size_t v = fg[rng.below(fg.size())];
    const std::array<int, 3> p{static_cast<int>(v % static_cast<std::size_t>(d.x)),
                               static_cast<int>((v / static_cast<std::size_t>(d.x)) % static_cast<std::size_t>(d.y)),
                               static_cast<int>(v / (static_cast<std::size_t>(d.x) * static_cast<std::size_t>(d.y)))};
    for (int a = 0; a < 3; ++a) {
      const int lo = std::max(0, p[static_cast<std::size_t>(a)] - patch[a] + 1);
      const int hi = std::min(p[static_cast<std::size_t>(a)], d[a] - patch[a]);
      origin[static_cast<std::size_t>(a)] = lo + static_cast<int>(rng.below(static_cast<std::uint64_t>(hi - lo + 1)));
    }
  } else {
    for (int a = 0; a < 3; ++a)
      origin[static_cast<std::size_t>(a)] = static_cast<int>(rng.below(static_cast<std::uint64_t>(d[a] - patch[a] + 1)));
  }

  const std::vector<int> classes = to_classes(s.labels);
  Patch out;
  out.origin = origin;
  out.x = Tensor(1, patch);
  out.classes.resize(patch.count());
  for (int k = 0; k < patch.z; ++k)
    for (int j = 0; j < patch.y; ++j)
      for (int i = 0; i < patch.x; ++i) {
        const std::size_t src = d.index(i + origin[0], j + origin[1], k + origin[2]);
        const std::size_t dst = patch.index(i, j, k);
        out.x.data[dst] = s.volume.data[src];
        out.classes[dst] = classes[src];
      }
  return out;
}

std::vector<Patch> sample_patches(const Sample& s, const Dims& patch, std::size_t count, double foreground_probability,
                                  Rng& rng) {
  std::vector<Patch> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) out.push_back(sample_patch(s, patch, foreground_probability, rng));
  return out;
}

LabelMap predict(const Model& segmentor, const Volume& normalized, const LabelMap& like) {
  const int div = segmentor.spec().divisor();
  const Dims& d = normalized.dims;
  Dims padded{};
  for (int a = 0; a < 3; ++a) padded[a] = (d[a] + div - 1) / div * div;
  Tensor x(1, padded);
  for (int k = 0; k < padded.z; ++k)
    for (int j = 0; j < padded.y; ++j)
      for (int i = 0; i < padded.x; ++i)
        x.data[padded.index(i, j, k)] = normalized.at(std::min(i, d.x - 1), std::min(j, d.y - 1), std::min(k, d.z - 1));
  const std::vector<int> full = argmax_channels(segmentor.forward(x));
  std::vector<int> classes(d.count());
  for (int k = 0; k < d.z; ++k)
    for (int j = 0; j < d.y; ++j)
      for (int i = 0; i < d.x; ++i) classes[d.index(i, j, k)] = full[padded.index(i, j, k)];
  return from_classes(classes, like);
}

double pool_dice(const Model& segmentor, const SamplePool& pool, const NormalizationSpec& norm) {
  if (pool.empty()) return 0.0;
  double total = 0.0;
  for (std::size_t s = 0; s < pool.size(); ++s) {
    const Sample sample = training_view(pool.get(s), norm);
    const LabelMap pred = predict(segmentor, sample.volume, sample.labels);
    double sum = 0.0;
    for (const auto& l : sample.labels.label_set) sum += dice_coefficient(pred, sample.labels, l.id);
    total += sample.labels.label_set.empty() ? 1.0 : sum / static_cast<double>(sample.labels.label_set.size());
  }
  return total / static_cast<double>(pool.size());
}

// ---- segmentor training (phases 1 and 3) ----

namespace {

int iterations_for(const PhasePlan& plan, std::size_t pool) {
  if (plan.iterations_per_epoch > 0) return plan.iterations_per_epoch;
  const auto b = static_cast<std::size_t>(plan.batch_size);
  return static_cast<int>(std::max<std::size_t>(1, (pool + b - 1) / b));
}

std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
  return order;
}

int label_count(const SamplePool& pool) { return static_cast<int>(pool.get(0).labels.label_set.size()); }

void check_segmentor_spec(const NetworkSpec& spec, int n_labels) {
  if (spec.out_channels != n_labels + 1)
    throw ValidationError("segmentor has " + std::to_string(spec.out_channels) + " output channels but the data has " +
                          std::to_string(n_labels) + " labels (+ background)");
}

bool load_into(const std::filesystem::path& path, const NetworkSpec& expected, SegmentorRun& run) {
  if (!std::filesystem::exists(path)) return false;
  Checkpoint c = load_checkpoint(path);
  if (!(c.model.spec() == expected))
    throw ValidationError("checkpoint " + path.string() + " was written for a different network spec");
  run.model = std::move(c.model);
  run.optimizer = std::move(c.optimizer);
  run.epochs_done = c.epoch;
  return true;
}

void train_segmentor(SegmentorRun& run, const SamplePool& pool, const SamplePool& originals, const SamplePool* validation,
                     int phase, Domain domain, int epochs, const TrainingSetup& setup,
                     const std::filesystem::path& checkpoint, JsonlLog& log) {
  const PhasePlan& plan = setup.plan;
  const int iters = iterations_for(plan, pool.size());
  const int classes = run.model.spec().out_channels;
  int stop = epochs;
  if (setup.max_epochs_this_call >= 0) stop = std::min(stop, run.epochs_done + setup.max_epochs_this_call);

  for (int e = run.epochs_done; e < stop; ++e) {
    const auto order = epoch_order(pool.size(), derive_seed(setup.seed, {kOrder, static_cast<std::uint64_t>(phase),
                                                                          tag(domain), static_cast<std::uint64_t>(e)}));
    double loss_sum = 0.0, ce_sum = 0.0, dice_sum = 0.0;
    for (int it = 0; it < iters; ++it) {
      run.model.zero_grad();
      for (int b = 0; b < plan.batch_size; ++b) {
        const std::size_t slot = static_cast<std::size_t>(it) * static_cast<std::size_t>(plan.batch_size) +
                                 static_cast<std::size_t>(b);
        const Sample s = training_view(pool.get(order[slot % order.size()]), setup.normalization);
        Rng rng(derive_seed(setup.seed, {static_cast<std::uint64_t>(phase), tag(domain), static_cast<std::uint64_t>(e),
                                         static_cast<std::uint64_t>(it), static_cast<std::uint64_t>(b)}));
        const Patch p = sample_patch(s, plan.patch_size, plan.foreground_probability, rng);
        const SpatialParts parts =
            seg_loss(run.model, p.x, one_hot(p.classes, classes, p.x.dims), setup.dice, true);
        loss_sum += parts.total();
        ce_sum += parts.ce;
        dice_sum += parts.dice;
      }
      if (plan.batch_size > 1) scale(run.model.gradients(), 1.0 / plan.batch_size);
      run.optimizer.step(run.model.parameters(), run.model.gradients());
    }
    const double n = static_cast<double>(iters) * plan.batch_size;
    run.train_dice = pool_dice(run.model, originals, setup.normalization);
    json line{{"phase", phase},
              {"domain", to_string(domain)},
              {"epoch", e},
              {"steps", iters},
              {"loss", loss_sum / n},
              {"ce", ce_sum / n},
              {"dice_loss", dice_sum / n},
              {"train_dice", run.train_dice}};
    if (validation != nullptr && !validation->empty())
      line["val_dice"] = pool_dice(run.model, *validation, setup.normalization);
    log.write(line);
    run.epochs_done = e + 1;
    save_checkpoint(checkpoint, run.model, run.optimizer, run.epochs_done,
                    {{"phase", phase}, {"domain", to_string(domain)}, {"role", "segmentor"}});
    log::info("phase " + std::to_string(phase) + " " + to_string(domain) + " epoch " + std::to_string(e + 1) + "/" +
              std::to_string(epochs) + " loss " + std::to_string(loss_sum / n) + " train dice " +
              std::to_string(run.train_dice));
  }
  if (run.epochs_done == 0 && !std::filesystem::exists(checkpoint))
    save_checkpoint(checkpoint, run.model, run.optimizer, 0,
                    {{"phase", phase}, {"domain", to_string(domain)}, {"role", "segmentor"}});
}

NetworkSpec segmentor_for(const TrainingSetup& setup, int n_labels) {
  NetworkSpec spec = setup.segmentor;
  spec.out_channels = n_labels + 1;
  return spec;
}

}  // namespace

Phase1Result phase1_pretrain_segmentors(const DomainPools& data, const TrainingSetup& setup) {
  Layout layout{setup.out_dir};
  Phase1Result result;
  for (Domain d : {Domain::A, Domain::B}) {
    const SamplePool pool = data[d].filtered({Provenance::original});
    if (pool.empty())
      throw ValidationError("phase 1 needs at least one labeled original sample for domain " + to_string(d));
    const NetworkSpec spec = segmentor_for(setup, label_count(pool));
    check_segmentor_spec(spec, label_count(pool));
    SegmentorRun& run = d == Domain::A ? result.a : result.b;
    const auto path = layout.segmentor(1, d);
    if (!(setup.resume && load_into(path, spec, run))) {
      run.model = Model(spec, derive_seed(setup.seed, {kInit, kSegmentorNet, tag(d)}));
      run.optimizer = Adam(setup.plan.adam());
      run.epochs_done = 0;
    }
    JsonlLog log(layout.log("phase1_" + to_string(d)), before_epoch(run.epochs_done));
    train_segmentor(run, pool, pool, nullptr, 1, d, setup.plan.phase1_epochs, setup, path, log);
  }
  return result;
}

Phase3Result phase3_train_final(const DomainPools& pools, const DomainPools& validation, const TrainingSetup& setup) {
  Layout layout{setup.out_dir};
  std::vector<Provenance> keep{Provenance::original};
  if (setup.flags.use_preprocess_augment) keep.push_back(Provenance::augmented);
  if (setup.flags.use_synthesized) keep.push_back(Provenance::synthesized);

  Phase3Result result;
  for (Domain d : {Domain::A, Domain::B}) {
    const SamplePool pool = pools[d].filtered(keep);
    if (pool.empty())
      throw PreconditionError("phase 3 training pool for domain " + to_string(d) + " is empty after ablation filtering");
    const SamplePool originals = pool.filtered({Provenance::original});
    const NetworkSpec spec = segmentor_for(setup, label_count(pool));
    SegmentorRun& run = d == Domain::A ? result.a : result.b;
    const auto path = layout.segmentor(3, d);
    if (!(setup.resume && load_into(path, spec, run))) {
      if (setup.plan.phase3_from_phase1) {
        const auto p1 = layout.segmentor(1, d);
        if (!load_into(p1, spec, run))
          throw PreconditionError("phase 3 fine-tunes from phase 1 but " + p1.string() + " is missing; run train-seg first");
        const Adam& o = run.optimizer;
        run.optimizer.restore(setup.plan.adam(), o.steps(), o.first_moment(), o.second_moment());
      } else {
        run.model = Model(spec, derive_seed(setup.seed, {kInit, kSegmentorNet, tag(d), 3}));
        run.optimizer = Adam(setup.plan.adam());
      }
      run.epochs_done = 0;
    }
    const int start = run.epochs_done;
    JsonlLog log(layout.log("phase3_" + to_string(d)), [start, earlier = before_epoch(start)](const json& line) {
      return start > 0 && (line.value("type", "") == "pool" || earlier(line));
    });
    if (start == 0)
      log.write({{"type", "pool"},
                 {"domain", to_string(d)},
                 {"original", pool.count(Provenance::original)},
                 {"augmented", pool.count(Provenance::augmented)},
                 {"synthesized", pool.count(Provenance::synthesized)}});
    const SamplePool* val = validation[d].empty() ? nullptr : &validation[d];
    train_segmentor(run, pool, originals.empty() ? pool : originals, val, 3, d, setup.plan.phase3_epochs, setup, path,
                    log);
  }
  return result;
}

// ---- phase 2 ----

namespace {

struct GanModels {
  Model gen_ab, gen_ba, disc_a, disc_b;
  Adam opt_gen_ab, opt_gen_ba, opt_disc_a, opt_disc_b;
  int epochs_done = 0;
};

bool load_gan(const Layout& layout, const TrainingSetup& setup, GanModels& m) {
  const std::array<std::filesystem::path, 4> paths{layout.generator(Domain::A), layout.generator(Domain::B),
                                                   layout.discriminator(Domain::A), layout.discriminator(Domain::B)};
  for (const auto& p : paths)
    if (!std::filesystem::exists(p)) return false;
  std::array<Checkpoint, 4> c{load_checkpoint(paths[0]), load_checkpoint(paths[1]), load_checkpoint(paths[2]),
                              load_checkpoint(paths[3])};
  if (!(c[0].model.spec() == setup.generator && c[1].model.spec() == setup.generator &&
        c[2].model.spec() == setup.discriminator && c[3].model.spec() == setup.discriminator))
    throw ValidationError("phase-2 checkpoints were written for different network specs");
  if (c[0].epoch != c[1].epoch || c[0].epoch != c[2].epoch || c[0].epoch != c[3].epoch)
    throw ValidationError("phase-2 checkpoints disagree on the epoch counter");
  m.gen_ab = std::move(c[0].model);
  m.opt_gen_ab = std::move(c[0].optimizer);
  m.gen_ba = std::move(c[1].model);
  m.opt_gen_ba = std::move(c[1].optimizer);
  m.disc_a = std::move(c[2].model);
  m.opt_disc_a = std::move(c[2].optimizer);
  m.disc_b = std::move(c[3].model);
  m.opt_disc_b = std::move(c[3].optimizer);
  m.epochs_done = c[0].epoch;
  return true;
}

void save_gan(const Layout& layout, const GanModels& m) {
  const json meta{{"phase", 2}};
  auto with = [&](const char* role) {
    json j = meta;
    j["role"] = role;
    return j;
  };
  save_checkpoint(layout.generator(Domain::A), m.gen_ab, m.opt_gen_ab, m.epochs_done, with("generator"));
  save_checkpoint(layout.generator(Domain::B), m.gen_ba, m.opt_gen_ba, m.epochs_done, with("generator"));
  save_checkpoint(layout.discriminator(Domain::A), m.disc_a, m.opt_disc_a, m.epochs_done, with("discriminator"));
  save_checkpoint(layout.discriminator(Domain::B), m.disc_b, m.opt_disc_b, m.epochs_done, with("discriminator"));
}

// One translation direction's generator terms: src -> fake (gen_fwd), fake -> rec (gen_back).
// Returns the gradient w.r.t. fake; gen_back's parameter gradients accumulate.
struct Direction {
  Tape fwd_tape, back_tape;
  Tensor fake, rec;
};

}  // namespace

Phase2Result phase2_train_gan(const DomainPools& data, const TrainingSetup& setup) {
  Layout layout{setup.out_dir};
  const PhasePlan& plan = setup.plan;
  const SamplePool pool_a = data.a.filtered({Provenance::original});
  const SamplePool pool_b = data.b.filtered({Provenance::original});
  if (pool_a.empty() || pool_b.empty()) throw ValidationError("phase 2 needs original samples in both domains");

  const bool shape = setup.flags.use_shape_consistency;
  Model seg_a, seg_b;
  if (shape) {
    for (Domain d : {Domain::A, Domain::B})
      if (!std::filesystem::exists(layout.segmentor(1, d)))
        throw PreconditionError("phase 2 with shape consistency needs the phase-1 segmentor checkpoint " +
                                layout.segmentor(1, d).string() + "; run train-seg first");
    seg_a = load_checkpoint(layout.segmentor(1, Domain::A)).model;
    seg_b = load_checkpoint(layout.segmentor(1, Domain::B)).model;
  }

  GanModels m;
  if (!(setup.resume && load_gan(layout, setup, m))) {
    m.gen_ab = Model(setup.generator, derive_seed(setup.seed, {kInit, kGeneratorNet, 0}));
    m.gen_ba = Model(setup.generator, derive_seed(setup.seed, {kInit, kGeneratorNet, 1}));
    m.disc_a = Model(setup.discriminator, derive_seed(setup.seed, {kInit, kDiscriminatorNet, 0}));
    m.disc_b = Model(setup.discriminator, derive_seed(setup.seed, {kInit, kDiscriminatorNet, 1}));
    m.opt_gen_ab = m.opt_gen_ba = m.opt_disc_a = m.opt_disc_b = Adam(plan.adam());
    m.epochs_done = 0;
  }

  const int total = plan.phase2_warmup_epochs + plan.phase2_spatial_epochs;
  int stop = total;
  if (setup.max_epochs_this_call >= 0) stop = std::min(stop, m.epochs_done + setup.max_epochs_this_call);
  const int iters = plan.gan_iterations_per_epoch > 0 ? plan.gan_iterations_per_epoch
                                                      : static_cast<int>(std::max(pool_a.size(), pool_b.size()));
  JsonlLog log(layout.log("phase2"), before_epoch(m.epochs_done));

  Phase2Result result;
  std::int64_t g_steps = static_cast<std::int64_t>(m.epochs_done) * iters;
  std::int64_t d_steps = g_steps;

  for (int e = m.epochs_done; e < stop; ++e) {
    const double lambda_spatial = shape && e >= plan.phase2_warmup_epochs ? setup.weights.lambda_spatial : 0.0;
    LossWeights w = setup.weights;
    w.lambda_spatial = lambda_spatial;
    double cycle_sum = 0.0;

    for (int it = 0; it < iters; ++it) {
      m.gen_ab.zero_grad();
      m.gen_ba.zero_grad();
      LossReport rep_a, rep_b;
      std::vector<std::pair<Tensor, Tensor>> d_inputs_a, d_inputs_b;  // (real, fake)

      for (int b = 0; b < plan.batch_size; ++b) {
        Rng rng(derive_seed(setup.seed, {2, static_cast<std::uint64_t>(e), static_cast<std::uint64_t>(it),
                                         static_cast<std::uint64_t>(b)}));
        const Sample sa = training_view(pool_a.get(rng.below(pool_a.size())), setup.normalization);
        const Sample sb = training_view(pool_b.get(rng.below(pool_b.size())), setup.normalization);
        const Patch pa = sample_patch(sa, plan.patch_size, plan.foreground_probability, rng);
        const Patch pb = sample_patch(sb, plan.patch_size, plan.foreground_probability, rng);

        // A -> B -> A and B -> A -> B.
        Direction ab, ba;
        ab.fake = m.gen_ab.forward(pa.x, ab.fwd_tape);
        ab.rec = m.gen_ba.forward(ab.fake, ab.back_tape);
        ba.fake = m.gen_ba.forward(pb.x, ba.fwd_tape);
        ba.rec = m.gen_ab.forward(ba.fake, ba.back_tape);

        auto generator_terms = [&](Direction& dir, const Patch& src, Model& disc, Model& critic, Model& gen_fwd,
                                   Model& gen_back, LossReport& rep) {
          Tape disc_tape;
          Tensor g_scores;
          rep.adv += adv_loss_generator(disc.forward(dir.fake, disc_tape), &g_scores);
          scale(g_scores, w.lambda_adv / plan.batch_size);
          Tensor d_fake = disc.backward(disc_tape, g_scores, false);

          if (lambda_spatial > 0.0) {
            Tape critic_tape;
            const Tensor logits = critic.forward(dir.fake, critic_tape);
            Tensor g_logits;
            const SpatialParts parts =
                spatial_loss(logits, one_hot(src.classes, critic.spec().out_channels, src.x.dims), setup.dice, &g_logits);
            rep.spatial += parts.total();
            rep.ce += parts.ce;
            rep.dice += parts.dice;
            scale(g_logits, lambda_spatial / plan.batch_size);
            d_fake += critic.backward(critic_tape, g_logits, false);
          }

          Tensor g_rec;
          rep.cycle += cycle_loss(src.x, dir.rec, &g_rec);
          scale(g_rec, w.lambda_cycle / plan.batch_size);
          d_fake += gen_back.backward(dir.back_tape, g_rec, true);
          gen_fwd.backward(dir.fwd_tape, d_fake, true);
        };
        generator_terms(ab, pa, m.disc_b, seg_b, m.gen_ab, m.gen_ba, rep_a);
        generator_terms(ba, pb, m.disc_a, seg_a, m.gen_ba, m.gen_ab, rep_b);
        d_inputs_b.emplace_back(pb.x, std::move(ab.fake));
        d_inputs_a.emplace_back(pa.x, std::move(ba.fake));
      }
      m.opt_gen_ab.step(m.gen_ab.parameters(), m.gen_ab.gradients());
      m.opt_gen_ba.step(m.gen_ba.parameters(), m.gen_ba.gradients());
      ++g_steps;

      // Discriminators on the detached fakes of this step.
      auto discriminator_step = [&](Model& disc, Adam& opt, const std::vector<std::pair<Tensor, Tensor>>& inputs) {
        disc.zero_grad();
        double loss = 0.0;
        for (const auto& [real, fake] : inputs) {
          Tape tr, tf;
          const Tensor sr = disc.forward(real, tr);
          const Tensor sf = disc.forward(fake, tf);
          Tensor gr, gf;
          loss += adv_loss_discriminator(sr, sf, &gr, &gf);
          scale(gr, 1.0 / plan.batch_size);
          scale(gf, 1.0 / plan.batch_size);
          disc.backward(tr, gr, true);
          disc.backward(tf, gf, true);
        }
        opt.step(disc.parameters(), disc.gradients());
        return loss / plan.batch_size;
      };
      const double d_a = discriminator_step(m.disc_a, m.opt_disc_a, d_inputs_a);
      const double d_b = discriminator_step(m.disc_b, m.opt_disc_b, d_inputs_b);
      ++d_steps;

      for (LossReport* r : {&rep_a, &rep_b}) {
        r->adv /= plan.batch_size;
        r->cycle /= plan.batch_size;
        r->spatial /= plan.batch_size;
        r->ce /= plan.batch_size;
        r->dice /= plan.batch_size;
        finalize(*r, w);
      }
      cycle_sum += rep_a.cycle + rep_b.cycle;
      log.write({{"type", "step"},
                 {"epoch", e},
                 {"iter", it},
                 {"g_step", g_steps},
                 {"d_step", d_steps},
                 {"lambda_spatial", lambda_spatial},
                 {"A", report_json(rep_a)},
                 {"B", report_json(rep_b)},
                 {"d_A", d_a},
                 {"d_B", d_b}});
    }
    m.epochs_done = e + 1;
    save_gan(layout, m);
    log::info("phase 2 epoch " + std::to_string(e + 1) + "/" + std::to_string(total) + " mean cycle " +
              std::to_string(cycle_sum / (2.0 * iters)) + (lambda_spatial > 0.0 ? " (shape consistency on)" : ""));
  }
  if (m.epochs_done == 0) save_gan(layout, m);

  result.gen_ab = std::move(m.gen_ab);
  result.gen_ba = std::move(m.gen_ba);
  result.disc_a = std::move(m.disc_a);
  result.disc_b = std::move(m.disc_b);
  result.epochs_done = m.epochs_done;
  result.generator_steps = g_steps;
  result.discriminator_steps = d_steps;
  return result;
}

std::vector<Sample> synthesize(const std::vector<Sample>& samples, const Model& generator, Domain target) {
  std::vector<Sample> out;
  out.reserve(samples.size());
  for (const auto& s : samples) {
    s.validate();
    const Tensor x = to_tensor(s.volume);
    generator.check_input(x);
    const Tensor y = generator.forward(x);
    Sample r;
    r.volume = s.volume;
    std::transform(y.data.begin(), y.data.end(), r.volume.data.begin(), [](double v) { return static_cast<float>(v); });
    r.labels = s.labels;
    r.domain = target;
    r.provenance = Provenance::synthesized;
    r.id = "syn-" + s.id;
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace scgan
