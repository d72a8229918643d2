#pragma once

#include <filesystem>

#include "scgan/volume.hpp"

namespace scgan {

/// Reads a NIfTI-1 scan (.nii or .nii.gz) as a real-valued volume. The affine
/// comes from the sform when set, then the qform, then pixdim alone.
Volume read_volume(const std::filesystem::path& path);

/// Writes float32 data. The exact float64 affine is kept in a header
/// extension alongside the (float32) sform/qform so it survives round trips.
void write_volume(const Volume& v, const std::filesystem::path& path);

/// Reads an integer-typed label scan. Values must be non-negative integers.
LabelMap read_labels(const std::filesystem::path& path, LabelSet label_set = {});

/// Writes int16 when every value fits, int32 otherwise.
void write_labels(const LabelMap& m, const std::filesystem::path& path);

}  // namespace scgan
