#include "scgan/nifti.hpp"

#include <zlib.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>

namespace scgan {
namespace {

constexpr int kHeaderSize = 348;
constexpr int kCommentExtension = 6;
constexpr const char* kAffineTag = "scgan-affine-f64";

enum DataType : std::int16_t {
  kUint8 = 2,
  kInt16 = 4,
  kInt32 = 8,
  kFloat32 = 16,
  kFloat64 = 64,
  kInt8 = 256,
  kUint16 = 512,
  kUint32 = 768,
};

bool is_gzip(const std::filesystem::path& path) { return path.extension() == ".gz"; }

std::vector<unsigned char> read_file_bytes(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw IoError("file not found: " + path.string());
  std::vector<unsigned char> bytes;
  if (is_gzip(path)) {
    gzFile f = gzopen(path.string().c_str(), "rb");
    if (f == nullptr) throw IoError("cannot open " + path.string());
    unsigned char buf[1 << 16];
    int n = 0;
    while ((n = gzread(f, buf, sizeof(buf))) > 0) bytes.insert(bytes.end(), buf, buf + n);
    const bool failed = n < 0;
    gzclose(f);
    if (failed) throw IoError("corrupt gzip stream in " + path.string());
  } else {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    bytes.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
  }
  return bytes;
}

void write_file_bytes(const std::filesystem::path& path, const std::vector<unsigned char>& bytes) {
  if (!path.parent_path().empty() && !std::filesystem::is_directory(path.parent_path()))
    throw IoError("parent directory does not exist: " + path.parent_path().string());
  if (is_gzip(path)) {
    gzFile f = gzopen(path.string().c_str(), "wb6");
    if (f == nullptr) throw IoError("cannot write " + path.string());
    const int written = gzwrite(f, bytes.data(), static_cast<unsigned>(bytes.size()));
    const int closed = gzclose(f);
    if (written != static_cast<int>(bytes.size()) || closed != Z_OK) throw IoError("failed writing " + path.string());
  } else {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("failed writing " + path.string());
  }
}

/// Little/big-endian aware field access into the raw header bytes.
class HeaderView {
 public:
  HeaderView(const std::vector<unsigned char>& bytes, bool swap) : bytes_(bytes), swap_(swap) {}

  template <typename T>
  T get(std::size_t offset) const {
    T value;
    unsigned char tmp[sizeof(T)];
    std::memcpy(tmp, bytes_.data() + offset, sizeof(T));
    if (swap_) std::reverse(tmp, tmp + sizeof(T));
    std::memcpy(&value, tmp, sizeof(T));
    return value;
  }

 private:
  const std::vector<unsigned char>& bytes_;
  bool swap_;
};

template <typename T>
void put(std::vector<unsigned char>& bytes, std::size_t offset, T value) {
  static_assert(std::endian::native == std::endian::little);
  std::memcpy(bytes.data() + offset, &value, sizeof(T));
}

struct RawImage {
  Dims dims;
  std::int16_t datatype = 0;
  double slope = 1.0;
  double intercept = 0.0;
  Spacing spacing{1.0, 1.0, 1.0};
  Affine affine = Affine::Identity();
  std::vector<double> values;
};

Affine quaternion_affine(const HeaderView& h, const Spacing& pixdim, double qfac) {
  const double b = h.get<float>(256), c = h.get<float>(260), d = h.get<float>(264);
  const double a = std::sqrt(std::max(0.0, 1.0 - (b * b + c * c + d * d)));
  Eigen::Matrix3d r;
  r << a * a + b * b - c * c - d * d, 2 * (b * c - a * d), 2 * (b * d + a * c),
      2 * (b * c + a * d), a * a + c * c - b * b - d * d, 2 * (c * d - a * b),
      2 * (b * d - a * c), 2 * (c * d + a * b), a * a + d * d - c * c - b * b;
  Affine m = Affine::Identity();
  for (int i = 0; i < 3; ++i) {
    m(i, 0) = r(i, 0) * pixdim[0];
    m(i, 1) = r(i, 1) * pixdim[1];
    m(i, 2) = r(i, 2) * pixdim[2] * qfac;
  }
  m(0, 3) = h.get<float>(268);
  m(1, 3) = h.get<float>(272);
  m(2, 3) = h.get<float>(276);
  return m;
}

bool parse_affine_extension(const std::string& text, Affine& out) {
  const auto pos = text.find(kAffineTag);
  if (pos == std::string::npos) return false;
  std::istringstream in(text.substr(pos + std::strlen(kAffineTag)));
  Affine m;
  for (int i = 0; i < 4; ++i) {
    for (int j = 0; j < 4; ++j) {
      std::string token;
      if (!(in >> token)) return false;
      m(i, j) = std::strtod(token.c_str(), nullptr);
    }
  }
  out = m;
  return true;
}

RawImage decode(const std::vector<unsigned char>& bytes, const std::filesystem::path& path) {
  if (bytes.size() < kHeaderSize) throw IoError("malformed NIfTI header (file too short): " + path.string());
  std::int32_t sizeof_hdr = 0;
  std::memcpy(&sizeof_hdr, bytes.data(), 4);
  bool swap = false;
  if (sizeof_hdr != kHeaderSize) {
    if (static_cast<std::int32_t>(__builtin_bswap32(static_cast<std::uint32_t>(sizeof_hdr))) != kHeaderSize) throw IoError("malformed NIfTI header (sizeof_hdr): " + path.string());
    swap = true;
  }
  if (std::memcmp(bytes.data() + 344, "n+1", 4) != 0 && std::memcmp(bytes.data() + 344, "ni1", 4) != 0)
    throw IoError("malformed NIfTI header (magic): " + path.string());
  if (std::memcmp(bytes.data() + 344, "ni1", 4) == 0)
    throw IoError("detached .hdr/.img pairs are not supported: " + path.string());

  const HeaderView h(bytes, swap);
  RawImage img;
  const std::int16_t ndim = h.get<std::int16_t>(40);
  if (ndim < 3 || ndim > 7) throw ValidationError("expected 3 spatial dimensions, file has " + std::to_string(ndim));
  for (int i = 4; i <= ndim; ++i)
    if (h.get<std::int16_t>(40 + 2 * i) > 1)
      throw ValidationError("expected 3 spatial dimensions, file has non-singleton dimension " + std::to_string(i));
  img.dims = {h.get<std::int16_t>(42), h.get<std::int16_t>(44), h.get<std::int16_t>(46)};
  if (img.dims.x < 1 || img.dims.y < 1 || img.dims.z < 1)
    throw ValidationError("expected 3 spatial dimensions, got " + img.dims.str());

  img.datatype = h.get<std::int16_t>(70);
  for (int i = 0; i < 3; ++i) img.spacing[i] = std::abs(h.get<float>(80 + 4 * i));
  for (double& s : img.spacing)
    if (!(s > 0.0)) s = 1.0;
  const double qfac = h.get<float>(76) < 0.0F ? -1.0 : 1.0;
  const double slope = h.get<float>(112);
  if (slope != 0.0 && std::isfinite(slope)) {
    img.slope = slope;
    img.intercept = h.get<float>(116);
  }

  const std::int16_t qform_code = h.get<std::int16_t>(252);
  const std::int16_t sform_code = h.get<std::int16_t>(254);
  if (sform_code > 0) {
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 4; ++c) img.affine(r, c) = h.get<float>(280 + 16 * r + 4 * c);
  } else if (qform_code > 0) {
    img.affine = quaternion_affine(h, img.spacing, qfac);
  } else {
    img.affine = Affine::Identity();
    for (int i = 0; i < 3; ++i) img.affine(i, i) = img.spacing[i];
  }

  const auto vox_offset = static_cast<std::size_t>(h.get<float>(108));
  // Extensions live between the header and the data.
  if (bytes.size() >= kHeaderSize + 4 && bytes[kHeaderSize] != 0) {
    std::size_t pos = kHeaderSize + 4;
    while (pos + 8 <= vox_offset && pos + 8 <= bytes.size()) {
      const auto esize = static_cast<std::size_t>(h.get<std::int32_t>(pos));
      const auto ecode = h.get<std::int32_t>(pos + 4);
      if (esize < 8 || pos + esize > bytes.size()) break;
      if (ecode == kCommentExtension) {
        const std::string text(reinterpret_cast<const char*>(bytes.data() + pos + 8), esize - 8);
        Affine exact;
        if (parse_affine_extension(text, exact)) {
          // Only trust the exact copy if it still agrees with the stored sform.
          const double scale = std::max(1.0, img.affine.cwiseAbs().maxCoeff());
          if ((exact - img.affine).cwiseAbs().maxCoeff() <= 1e-4 * scale) img.affine = exact;
        }
      }
      pos += esize;
    }
  }
  img.spacing = spacing_from_affine(img.affine);

  std::size_t elem = 0;
  switch (img.datatype) {
    case kUint8:
    case kInt8:
      elem = 1;
      break;
    case kInt16:
    case kUint16:
      elem = 2;
      break;
    case kInt32:
    case kUint32:
    case kFloat32:
      elem = 4;
      break;
    case kFloat64:
      elem = 8;
      break;
    default:
      throw IoError("unsupported NIfTI datatype " + std::to_string(img.datatype) + " in " + path.string());
  }
  const std::size_t n = img.dims.count();
  if (vox_offset < kHeaderSize || vox_offset + n * elem > bytes.size())
    throw IoError("malformed NIfTI file (truncated data): " + path.string());

  img.values.resize(n);
  const unsigned char* p = bytes.data() + vox_offset;
  for (std::size_t i = 0; i < n; ++i) {
    unsigned char tmp[8];
    std::memcpy(tmp, p + i * elem, elem);
    if (swap) std::reverse(tmp, tmp + elem);
    double v = 0.0;
    switch (img.datatype) {
      case kUint8: v = tmp[0]; break;
      case kInt8: v = static_cast<std::int8_t>(tmp[0]); break;
      case kInt16: { std::int16_t x; std::memcpy(&x, tmp, 2); v = x; break; }
      case kUint16: { std::uint16_t x; std::memcpy(&x, tmp, 2); v = x; break; }
      case kInt32: { std::int32_t x; std::memcpy(&x, tmp, 4); v = x; break; }
      case kUint32: { std::uint32_t x; std::memcpy(&x, tmp, 4); v = x; break; }
      case kFloat32: { float x; std::memcpy(&x, tmp, 4); v = x; break; }
      case kFloat64: { double x; std::memcpy(&x, tmp, 8); v = x; break; }
      default: break;
    }
    img.values[i] = v;
  }
  return img;
}

std::vector<unsigned char> encode(const Dims& dims, const Spacing& spacing, const Affine& affine, std::int16_t datatype,
                                  std::int16_t bitpix, const unsigned char* data, std::size_t data_bytes) {
  std::ostringstream ext_text;
  ext_text.precision(17);
  ext_text << kAffineTag;
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) ext_text << ' ' << affine(i, j);
  std::string text = ext_text.str();
  std::size_t esize = 8 + text.size() + 1;
  esize = (esize + 15) / 16 * 16;
  text.resize(esize - 8, '\0');

  const std::size_t vox_offset = kHeaderSize + 4 + esize;
  std::vector<unsigned char> bytes(vox_offset + data_bytes, 0);
  put<std::int32_t>(bytes, 0, kHeaderSize);
  bytes[38] = 'r';
  const std::int16_t dim[8] = {3, static_cast<std::int16_t>(dims.x), static_cast<std::int16_t>(dims.y),
                               static_cast<std::int16_t>(dims.z), 1, 1, 1, 1};
  for (int i = 0; i < 8; ++i) put<std::int16_t>(bytes, 40 + 2 * i, dim[i]);
  put<std::int16_t>(bytes, 70, datatype);
  put<std::int16_t>(bytes, 72, bitpix);

  // qform: rotation with qfac absorbing a reflection.
  Eigen::Matrix3d r;
  for (int j = 0; j < 3; ++j) r.col(j) = affine.block<3, 1>(0, j) / spacing[j];
  double qfac = 1.0;
  if (r.determinant() < 0.0) {
    qfac = -1.0;
    r.col(2) = -r.col(2);
  }
  Eigen::JacobiSVD<Eigen::Matrix3d> svd(r, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Eigen::Matrix3d rot = svd.matrixU() * svd.matrixV().transpose();
  Eigen::Quaterniond q(rot);
  if (q.w() < 0.0) q.coeffs() *= -1.0;

  const float pixdim[8] = {static_cast<float>(qfac), static_cast<float>(spacing[0]), static_cast<float>(spacing[1]),
                           static_cast<float>(spacing[2]), 1.0F, 1.0F, 1.0F, 1.0F};
  for (int i = 0; i < 8; ++i) put<float>(bytes, 76 + 4 * i, pixdim[i]);
  put<float>(bytes, 108, static_cast<float>(vox_offset));
  put<float>(bytes, 112, 1.0F);
  put<float>(bytes, 116, 0.0F);
  bytes[123] = 2;  // millimeters
  const char descrip[] = "scgan";
  std::memcpy(bytes.data() + 148, descrip, sizeof(descrip));
  put<std::int16_t>(bytes, 252, 1);
  put<std::int16_t>(bytes, 254, 1);
  put<float>(bytes, 256, static_cast<float>(q.x()));
  put<float>(bytes, 260, static_cast<float>(q.y()));
  put<float>(bytes, 264, static_cast<float>(q.z()));
  put<float>(bytes, 268, static_cast<float>(affine(0, 3)));
  put<float>(bytes, 272, static_cast<float>(affine(1, 3)));
  put<float>(bytes, 276, static_cast<float>(affine(2, 3)));
  for (int row = 0; row < 3; ++row)
    for (int c = 0; c < 4; ++c) put<float>(bytes, 280 + 16 * row + 4 * c, static_cast<float>(affine(row, c)));
  std::memcpy(bytes.data() + 344, "n+1", 4);

  bytes[kHeaderSize] = 1;
  put<std::int32_t>(bytes, kHeaderSize + 4, static_cast<std::int32_t>(esize));
  put<std::int32_t>(bytes, kHeaderSize + 8, kCommentExtension);
  std::memcpy(bytes.data() + kHeaderSize + 12, text.data(), text.size());

  std::memcpy(bytes.data() + vox_offset, data, data_bytes);
  return bytes;
}

void check_writable_dims(const Dims& d) {
  constexpr int kMax = std::numeric_limits<std::int16_t>::max();
  if (d.x < 1 || d.y < 1 || d.z < 1 || d.x > kMax || d.y > kMax || d.z > kMax)
    throw ValidationError("cannot write grid of shape " + d.str() + " as NIfTI-1");
}

}  // namespace

Volume read_volume(const std::filesystem::path& path) {
  RawImage img = decode(read_file_bytes(path), path);
  Volume v(img.dims, img.affine);
  for (std::size_t i = 0; i < img.values.size(); ++i)
    v.data[i] = static_cast<float>(img.values[i] * img.slope + img.intercept);
  v.validate();
  return v;
}

void write_volume(const Volume& v, const std::filesystem::path& path) {
  v.validate();
  check_writable_dims(v.dims);
  const auto bytes = encode(v.dims, v.spacing, v.affine, kFloat32, 32,
                            reinterpret_cast<const unsigned char*>(v.data.data()), v.data.size() * sizeof(float));
  write_file_bytes(path, bytes);
}

LabelMap read_labels(const std::filesystem::path& path, LabelSet label_set) {
  RawImage img = decode(read_file_bytes(path), path);
  LabelMap m(img.dims, std::move(label_set));
  m.affine = img.affine;
  m.spacing = img.spacing;
  for (std::size_t i = 0; i < img.values.size(); ++i) {
    const double v = std::round(img.values[i] * img.slope + img.intercept);
    if (v < 0.0 || v > std::numeric_limits<std::int32_t>::max())
      throw ValidationError("label file holds a value outside the non-negative integer range: " + path.string());
    m.data[i] = static_cast<std::int32_t>(v);
  }
  m.validate();
  return m;
}

void write_labels(const LabelMap& m, const std::filesystem::path& path) {
  check_writable_dims(m.dims);
  const auto [lo, hi] = std::minmax_element(m.data.begin(), m.data.end());
  const bool fits16 = m.data.empty() || (*lo >= std::numeric_limits<std::int16_t>::min() &&
                                         *hi <= std::numeric_limits<std::int16_t>::max());
  if (fits16) {
    std::vector<std::int16_t> narrow(m.data.begin(), m.data.end());
    write_file_bytes(path, encode(m.dims, m.spacing, m.affine, kInt16, 16,
                                  reinterpret_cast<const unsigned char*>(narrow.data()), narrow.size() * 2));
  } else {
    write_file_bytes(path, encode(m.dims, m.spacing, m.affine, kInt32, 32,
                                  reinterpret_cast<const unsigned char*>(m.data.data()), m.data.size() * 4));
  }
}

}  // namespace scgan
