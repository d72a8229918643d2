#pragma once

#include <cstdint>

#include "scgan/volume.hpp"

namespace scgan {

enum class ModalityStyle { pseudo_ct, pseudo_mri };

std::string to_string(ModalityStyle s);
ModalityStyle parse_modality_style(const std::string& s);

struct PhantomSpec {
  Dims shape{32, 32, 32};
  int n_labels = 7;
  std::uint64_t seed = 0;
  ModalityStyle style = ModalityStyle::pseudo_ct;

  /// Shape axes divisible by 32, n_labels in {4, 7}.
  void validate() const;
};

/// Label set used by phantoms: all seven structures, or {MYO, LAC, LVC, AA}
/// for four-label phantoms (ids stay those of the seven-label set).
LabelSet phantom_label_set(int n_labels);

/// Nested ellipsoidal heart-like structures inside an ellipsoidal body.
/// Geometry depends only on the seed, so both styles built from one seed
/// share the exact label map; intensities are per-label Gaussians whose
/// means differ per style (the MRI style inverts the blood-pool ordering).
/// Every label gets at least 32 voxels.
Sample generate_phantom(const PhantomSpec& spec);

}  // namespace scgan
