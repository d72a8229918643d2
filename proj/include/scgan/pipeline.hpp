#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "scgan/augment.hpp"
#include "scgan/losses.hpp"
#include "scgan/networks.hpp"
#include "scgan/optim.hpp"
#include "scgan/volume.hpp"

namespace scgan {

struct PhasePlan {
  int phase1_epochs = 100;
  int phase2_warmup_epochs = 50;
  int phase2_spatial_epochs = 150;
  int phase3_epochs = 100;
  double learning_rate = 2e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  /// Patches per optimizer step; gradients are accumulated over the batch.
  int batch_size = 1;
  Dims patch_size{64, 64, 64};
  /// Optimizer steps per epoch; 0 means one pass over the training pool.
  int iterations_per_epoch = 0;
  /// Phase-2 steps per epoch; 0 means max(|A|, |B|) original samples.
  int gan_iterations_per_epoch = 0;
  /// Probability that a patch is centred on a random foreground voxel.
  double foreground_probability = 2.0 / 3.0;
  /// Phase 3 starts from the phase-1 segmentors (weights and optimizer state).
  bool phase3_from_phase1 = true;

  [[nodiscard]] AdamConfig adam() const { return {learning_rate, beta1, beta2, 1e-8}; }
  void collect_violations(std::vector<std::string>& out, const std::string& prefix = "plan") const;
};

struct AblationFlags {
  bool use_preprocess_augment = true;
  bool use_synthesized = true;
  bool use_shape_consistency = true;
};

nlohmann::json to_json(const PhasePlan& p);
PhasePlan phase_plan_from_json(const nlohmann::json& j);
nlohmann::json to_json(const AblationFlags& f);
AblationFlags ablation_flags_from_json(const nlohmann::json& j);

/// Training data of one domain. Entries are kept in memory or loaded from
/// NIfTI files on access.
class SamplePool {
 public:
  struct FileEntry {
    std::filesystem::path image;
    std::filesystem::path labels;
    Domain domain = Domain::A;
    Provenance provenance = Provenance::original;
    std::string id;
  };

  void add(Sample s);
  void add_file(FileEntry e, LabelSet label_set);
  void append(const SamplePool& other);
  [[nodiscard]] std::size_t size() const { return entries_.size(); }
  [[nodiscard]] bool empty() const { return entries_.empty(); }
  [[nodiscard]] Sample get(std::size_t i) const;
  [[nodiscard]] std::size_t count(Provenance p) const;
  /// Entries whose provenance is in `keep` (shares the loaded samples).
  [[nodiscard]] SamplePool filtered(const std::vector<Provenance>& keep) const;

 private:
  struct Entry {
    std::shared_ptr<const Sample> sample;
    FileEntry file;
    LabelSet label_set;
    Provenance provenance = Provenance::original;
  };
  std::vector<Entry> entries_;
};

struct DomainPools {
  SamplePool a;
  SamplePool b;
  SamplePool& operator[](Domain d) { return d == Domain::A ? a : b; }
  const SamplePool& operator[](Domain d) const { return d == Domain::A ? a : b; }
};

/// Everything the training phases need besides data.
struct TrainingSetup {
  NetworkSpec segmentor = segmentor_spec(1, 7, 16);
  NetworkSpec generator = generator_spec(1, 16);
  NetworkSpec discriminator = discriminator_spec(1, 16);
  LossWeights weights;
  DiceOptions dice;
  PhasePlan plan;
  AblationFlags flags;
  NormalizationSpec normalization{NormalizationMode::rescale_unit, 0.5, 99.5};
  std::uint64_t seed = 0;
  std::filesystem::path out_dir = "scgan_out";
  /// Continue from existing checkpoints of the same phase.
  bool resume = true;
  /// Stop after this many epochs of the current call (test hook for resume); -1 = no limit.
  int max_epochs_this_call = -1;
};

/// Where each artifact lives under the output directory.
struct Layout {
  std::filesystem::path root;

  [[nodiscard]] std::filesystem::path checkpoints() const { return root / "checkpoints"; }
  [[nodiscard]] std::filesystem::path logs() const { return root / "logs"; }
  [[nodiscard]] std::filesystem::path segmentor(int phase, Domain d) const;
  [[nodiscard]] std::filesystem::path generator(Domain from) const;
  [[nodiscard]] std::filesystem::path discriminator(Domain d) const;
  /// logs/<name>.jsonl, e.g. "phase1_A" or "phase2".
  [[nodiscard]] std::filesystem::path log(const std::string& name) const;
  [[nodiscard]] std::filesystem::path preprocessed() const { return root / "preprocessed"; }
  [[nodiscard]] std::filesystem::path augmented() const { return root / "augmented"; }
  [[nodiscard]] std::filesystem::path synthesized() const { return root / "synthesized"; }
  [[nodiscard]] std::filesystem::path reports() const { return root / "reports"; }
};

/// JSON-lines log. Opening with resume keeps only the lines accepted by
/// `keep` (earlier epochs) so a resumed run ends with the same file.
class JsonlLog {
 public:
  JsonlLog() = default;
  JsonlLog(const std::filesystem::path& path, const std::function<bool(const nlohmann::json&)>& keep);
  void write(const nlohmann::json& line);

 private:
  std::ofstream out_;
};

std::vector<nlohmann::json> read_jsonl(const std::filesystem::path& path);

/// Single-channel network input from a volume.
Tensor to_tensor(const Volume& v);
/// Channel index per voxel: 0 for background, position + 1 in the label set otherwise.
std::vector<int> to_classes(const LabelMap& m);
/// Inverse of to_classes onto the geometry of `like`.
LabelMap from_classes(const std::vector<int>& classes, const LabelMap& like);

/// Normalizes original scans; augmented and synthesized ones already are.
Sample training_view(const Sample& s, const NormalizationSpec& norm);

struct Patch {
  Tensor x;
  std::vector<int> classes;
  std::array<int, 3> origin{0, 0, 0};
};

/// Random crop of `patch` voxels. With probability `foreground_probability`
/// the crop is placed so it contains a uniformly drawn foreground voxel;
/// otherwise (or when the labels are all background) its corner is uniform.
Patch sample_patch(const Sample& s, const Dims& patch, double foreground_probability, Rng& rng);
std::vector<Patch> sample_patches(const Sample& s, const Dims& patch, std::size_t count,
                                  double foreground_probability, Rng& rng);

/// Segments a whole volume, padding each axis up to the network divisor.
LabelMap predict(const Model& segmentor, const Volume& normalized, const LabelMap& like);

struct SegmentorRun {
  Model model;
  Adam optimizer;
  int epochs_done = 0;
  double train_dice = 0.0;  // mean foreground Dice on the training pool, last epoch
};

struct Phase1Result {
  SegmentorRun a;
  SegmentorRun b;
};

/// Phase 1: one segmentor per domain on the original data.
Phase1Result phase1_pretrain_segmentors(const DomainPools& data, const TrainingSetup& setup);

struct Phase2Result {
  Model gen_ab;  // G_B: A -> B
  Model gen_ba;  // G_A: B -> A
  Model disc_a;
  Model disc_b;
  int epochs_done = 0;
  std::int64_t generator_steps = 0;
  std::int64_t discriminator_steps = 0;
};

/// Phase 2: cycle-GAN with both directions, alternating one generator and
/// one discriminator update. Spatial (shape-consistency) terms use the frozen
/// phase-1 segmentors after the warm-up and are skipped entirely while the
/// effective weight is zero.
Phase2Result phase2_train_gan(const DomainPools& data, const TrainingSetup& setup);

/// Translates each sample with the generator; labels carry over unchanged.
/// Inputs must already be in the network intensity range (see training_view).
std::vector<Sample> synthesize(const std::vector<Sample>& samples, const Model& generator, Domain target);

struct Phase3Result {
  SegmentorRun a;
  SegmentorRun b;
};

/// Phase 3: final segmentors on the pooled data. `validation` may be empty.
Phase3Result phase3_train_final(const DomainPools& pools, const DomainPools& validation, const TrainingSetup& setup);

/// Mean foreground Dice of the segmentor over a pool (whole volumes).
double pool_dice(const Model& segmentor, const SamplePool& pool, const NormalizationSpec& norm);

}  // namespace scgan
