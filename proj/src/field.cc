#include "pvote/field.h"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

#include "pvote/error.h"
#include "pvote/rng.h"

namespace pvote {

std::size_t SegmentationMask::count_on_object() const {
  std::size_t n = 0;
  for (std::uint8_t l : labels) n += (l != 0);
  return n;
}

std::vector<int> SegmentationMask::object_pixels() const {
  std::vector<int> out;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] != 0) out.push_back(static_cast<int>(i));
  }
  return out;
}

void SegmentationMask::validate() const {
  if (width < 0 || height < 0 || labels.size() != static_cast<std::size_t>(width) * height) {
    throw Error(ErrorCode::kDimensionMismatch, "mask label count does not match its dimensions");
  }
}

VectorField::VectorField(int width, int height, int num_keypoints)
    : width_(width),
      height_(height),
      num_keypoints_(num_keypoints),
      data_(static_cast<std::size_t>(width) * height * num_keypoints * 2, 0.0) {
  if (width < 0 || height < 0 || num_keypoints < 0) {
    throw Error(ErrorCode::kInvalidArgument, "negative vector field dimension");
  }
}

void NoiseConfig::validate() const {
  if (!(angular_sigma >= 0.0)) throw Error(ErrorCode::kInvalidArgument, "angular_sigma must be >= 0");
  if (!(outlier_rate >= 0.0 && outlier_rate <= 1.0)) {
    throw Error(ErrorCode::kInvalidArgument, "outlier_rate must be in [0, 1]");
  }
}

VectorField gt_vector_field(const SegmentationMask& mask, const std::vector<Vec2>& keypoints2d) {
  mask.validate();
  const int num_k = static_cast<int>(keypoints2d.size());
  VectorField field(mask.width, mask.height, num_k);
  for (int row = 0; row < mask.height; ++row) {
    for (int col = 0; col < mask.width; ++col) {
      const std::size_t pixel = static_cast<std::size_t>(row) * mask.width + col;
      if (!mask.on_object(pixel)) continue;
      const Vec2 p(col, row);
      for (int k = 0; k < num_k; ++k) {
        const Vec2 d = keypoints2d[k] - p;
        const double n = d.norm();
        if (n > 0.0) field.set(pixel, k, d / n);
      }
    }
  }
  return field;
}

VectorField corrupt_field(VectorField field, const SegmentationMask& mask, const NoiseConfig& cfg) {
  cfg.validate();
  mask.validate();
  if (mask.width != field.width() || mask.height != field.height()) {
    throw Error(ErrorCode::kDimensionMismatch, "mask and field sizes differ");
  }
  if (cfg.is_noiseless()) return field;

  const int num_k = field.num_keypoints();
  for (int row = 0; row < field.height(); ++row) {
    Rng rng(derive_seed(cfg.seed, static_cast<std::uint64_t>(row)));
    for (int col = 0; col < field.width(); ++col) {
      const std::size_t pixel = static_cast<std::size_t>(row) * field.width() + col;
      if (!mask.on_object(pixel)) continue;
      for (int k = 0; k < num_k; ++k) {
        const Vec2 v = field.at(pixel, k);
        if (v.x() == 0.0 && v.y() == 0.0) continue;
        if (cfg.outlier_rate > 0.0 && rng.bernoulli(cfg.outlier_rate)) {
          const double a = rng.uniform(0.0, 2.0 * M_PI);
          field.set(pixel, k, Vec2(std::cos(a), std::sin(a)));
        } else if (cfg.angular_sigma > 0.0) {
          const double a = cfg.angular_sigma * rng.normal();
          const double c = std::cos(a), s = std::sin(a);
          field.set(pixel, k, Vec2(c * v.x() - s * v.y(), s * v.x() + c * v.y()));
        }
      }
    }
  }
  return field;
}

double smooth_l1(double d) {
  const double a = std::abs(d);
  return a < 1.0 ? 0.5 * d * d : a - 0.5;
}

double smooth_l1_loss(const VectorField& pred, const VectorField& gt, const SegmentationMask& mask) {
  mask.validate();
  if (pred.width() != gt.width() || pred.height() != gt.height() ||
      pred.num_keypoints() != gt.num_keypoints() || mask.width != gt.width() ||
      mask.height != gt.height()) {
    throw Error(ErrorCode::kDimensionMismatch, "prediction, ground truth and mask shapes differ");
  }
  double loss = 0.0;
  for (std::size_t pixel = 0; pixel < mask.labels.size(); ++pixel) {
    if (!mask.on_object(pixel)) continue;
    for (int k = 0; k < gt.num_keypoints(); ++k) {
      const Vec2 d = pred.at(pixel, k) - gt.at(pixel, k);
      loss += smooth_l1(d.x()) + smooth_l1(d.y());
    }
  }
  return loss;
}

namespace {

constexpr char kFieldMagic[4] = {'P', 'V', 'F', '1'};

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32(const std::uint8_t* p) {
  return static_cast<std::uint32_t>(p[0]) | static_cast<std::uint32_t>(p[1]) << 8 |
         static_cast<std::uint32_t>(p[2]) << 16 | static_cast<std::uint32_t>(p[3]) << 24;
}

std::vector<std::uint8_t> read_all(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIoError, "cannot open '" + path + "'");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_all(const std::string& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIoError, "cannot write '" + path + "'");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorCode::kIoError, "failed writing '" + path + "'");
}

}  // namespace

std::vector<std::uint8_t> encode_field(const VectorField& field) {
  std::vector<std::uint8_t> out(kFieldMagic, kFieldMagic + 4);
  put_u32(out, static_cast<std::uint32_t>(field.width()));
  put_u32(out, static_cast<std::uint32_t>(field.height()));
  put_u32(out, static_cast<std::uint32_t>(field.num_keypoints()));
  out.reserve(out.size() + field.data().size() * 4);
  for (double v : field.data()) put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
  return out;
}

VectorField decode_field(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 16 || std::memcmp(bytes.data(), kFieldMagic, 4) != 0) {
    throw Error(ErrorCode::kParseError, "not a PVF1 field dump");
  }
  const std::uint32_t w = get_u32(&bytes[4]);
  const std::uint32_t h = get_u32(&bytes[8]);
  const std::uint32_t k = get_u32(&bytes[12]);
  const std::uint64_t count = std::uint64_t{w} * h * k * 2;
  if (w > (1u << 20) || h > (1u << 20) || k > (1u << 16) || bytes.size() != 16 + count * 4) {
    throw Error(ErrorCode::kParseError, "field dump size does not match its header");
  }
  VectorField field(static_cast<int>(w), static_cast<int>(h), static_cast<int>(k));
  auto& data = field.data();
  for (std::uint64_t i = 0; i < count; ++i) {
    data[i] = std::bit_cast<float>(get_u32(&bytes[16 + i * 4]));
  }
  return field;
}

void write_field(const std::string& path, const VectorField& field) {
  write_all(path, encode_field(field));
}

VectorField read_field(const std::string& path) { return decode_field(read_all(path)); }

void write_mask_pgm(const std::string& path, const SegmentationMask& mask) {
  mask.validate();
  const std::string header =
      "P5\n" + std::to_string(mask.width) + " " + std::to_string(mask.height) + "\n255\n";
  std::vector<std::uint8_t> bytes(header.begin(), header.end());
  bytes.insert(bytes.end(), mask.labels.begin(), mask.labels.end());
  write_all(path, bytes);
}

SegmentationMask read_mask_pgm(const std::string& path) {
  const std::vector<std::uint8_t> bytes = read_all(path);
  std::size_t pos = 0;
  // Reads the next whitespace-delimited header token, skipping comments.
  auto token = [&]() -> std::string {
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(bytes[pos])) {
        ++pos;
      } else {
        break;
      }
    }
    std::string t;
    while (pos < bytes.size() && !std::isspace(bytes[pos])) t.push_back(static_cast<char>(bytes[pos++]));
    return t;
  };
  if (token() != "P5") throw Error(ErrorCode::kParseError, path + ": not a binary PGM (P5)");
  int w = 0, h = 0, maxval = 0;
  try {
    w = std::stoi(token());
    h = std::stoi(token());
    maxval = std::stoi(token());
  } catch (const std::exception&) {
    throw Error(ErrorCode::kParseError, path + ": malformed PGM header");
  }
  if (w < 0 || h < 0 || maxval != 255) {
    throw Error(ErrorCode::kParseError, path + ": unsupported PGM header (need maxval 255)");
  }
  ++pos;  // single whitespace after maxval
  SegmentationMask mask(w, h);
  if (bytes.size() < pos + mask.labels.size()) {
    throw Error(ErrorCode::kParseError, path + ": truncated PGM pixel data");
  }
  std::copy_n(bytes.begin() + static_cast<std::ptrdiff_t>(pos), mask.labels.size(), mask.labels.begin());
  return mask;
}

}  // namespace pvote
