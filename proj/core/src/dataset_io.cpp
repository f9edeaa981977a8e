#include "synergy/dataset.hpp"

#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

namespace synergy {

namespace {

std::string offset_hex(uint64_t off) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "0x%llx", static_cast<unsigned long long>(off));
  return buf;
}

[[noreturn]] void bad_file(const std::string& path, uint64_t offset, const std::string& what) {
  throw FormatError(path + ": " + what + " at byte offset " + offset_hex(offset));
}

class IdxReader {
 public:
  explicit IdxReader(const std::string& path) : path_(path), in_(path, std::ios::binary) {
    if (!in_) throw FormatError(path + ": cannot open file");
  }

  uint32_t read_u32() {
    std::array<unsigned char, 4> b{};
    read_bytes(b.data(), 4);
    return (uint32_t(b[0]) << 24) | (uint32_t(b[1]) << 16) | (uint32_t(b[2]) << 8) | uint32_t(b[3]);
  }

  void read_bytes(void* dst, size_t n) {
    in_.read(reinterpret_cast<char*>(dst), static_cast<std::streamsize>(n));
    if (static_cast<size_t>(in_.gcount()) != n)
      bad_file(path_, pos_ + static_cast<uint64_t>(in_.gcount()), "unexpected end of file");
    pos_ += n;
  }

  void expect_eof() {
    char c;
    in_.read(&c, 1);
    if (!in_.eof()) bad_file(path_, pos_, "trailing data");
  }

  uint64_t pos() const { return pos_; }
  const std::string& path() const { return path_; }

 private:
  std::string path_;
  std::ifstream in_;
  uint64_t pos_ = 0;
};

void write_u32(std::ofstream& out, uint32_t v) {
  std::array<unsigned char, 4> b{static_cast<unsigned char>(v >> 24),
                                 static_cast<unsigned char>(v >> 16),
                                 static_cast<unsigned char>(v >> 8), static_cast<unsigned char>(v)};
  out.write(reinterpret_cast<const char*>(b.data()), 4);
}

constexpr uint32_t kImagesMagic = 0x0803;  // unsigned byte, 3 dimensions
constexpr uint32_t kLabelsMagic = 0x0801;  // unsigned byte, 1 dimension

}  // namespace

template <typename T>
LabeledDataset<T> load_idx(const std::string& images_path, const std::string& labels_path) {
  IdxReader imgs(images_path);
  uint32_t magic = imgs.read_u32();
  if (magic != kImagesMagic) bad_file(images_path, 0, "bad image magic " + offset_hex(magic));
  const uint64_t count = imgs.read_u32();
  const uint64_t rows = imgs.read_u32();
  const uint64_t cols = imgs.read_u32();
  if (rows == 0 || cols == 0) bad_file(images_path, 8, "zero image dimensions");

  LabeledDataset<T> ds;
  ds.input_shape = {1, static_cast<int64_t>(rows), static_cast<int64_t>(cols)};
  ds.inputs.resize(count * rows * cols);
  {
    std::vector<unsigned char> raw(rows * cols);
    for (uint64_t i = 0; i < count; ++i) {
      imgs.read_bytes(raw.data(), raw.size());
      T* out = ds.inputs.data() + i * raw.size();
      for (size_t j = 0; j < raw.size(); ++j) out[j] = static_cast<T>(raw[j]) / T(255);
    }
  }
  imgs.expect_eof();

  IdxReader labs(labels_path);
  magic = labs.read_u32();
  if (magic != kLabelsMagic) bad_file(labels_path, 0, "bad label magic " + offset_hex(magic));
  const uint64_t label_count = labs.read_u32();
  if (label_count != count)
    bad_file(labels_path, 4,
             "label count " + std::to_string(label_count) + " does not match image count " +
                 std::to_string(count));
  std::vector<unsigned char> raw(label_count);
  if (label_count > 0) labs.read_bytes(raw.data(), raw.size());
  labs.expect_eof();

  ds.labels.resize(label_count);
  int32_t max_label = -1;
  for (uint64_t i = 0; i < label_count; ++i) {
    ds.labels[i] = raw[i];
    max_label = std::max(max_label, ds.labels[i]);
  }
  ds.class_count = max_label + 1;
  ds.name = std::filesystem::path(images_path).filename().string();
  return ds;
}

template <typename T>
void save_idx(const LabeledDataset<T>& ds, const std::string& images_path,
              const std::string& labels_path) {
  if (ds.input_shape.size() != 3)
    throw ShapeError("save_idx: expected {channels, H, W} samples, got shape " +
                     shape_str(ds.input_shape));
  if (ds.input_shape[0] != 1)
    throw ShapeError("save_idx: only single-channel images are supported");

  std::ofstream imgs(images_path, std::ios::binary);
  if (!imgs) throw FormatError(images_path + ": cannot open file for writing");
  write_u32(imgs, kImagesMagic);
  write_u32(imgs, static_cast<uint32_t>(ds.size()));
  write_u32(imgs, static_cast<uint32_t>(ds.input_shape[1]));
  write_u32(imgs, static_cast<uint32_t>(ds.input_shape[2]));
  std::vector<unsigned char> raw(ds.inputs.size());
  for (size_t i = 0; i < ds.inputs.size(); ++i) {
    double v = std::round(static_cast<double>(ds.inputs[i]) * 255.0);
    raw[i] = static_cast<unsigned char>(std::clamp(v, 0.0, 255.0));
  }
  imgs.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (!imgs) throw FormatError(images_path + ": write failed");

  std::ofstream labs(labels_path, std::ios::binary);
  if (!labs) throw FormatError(labels_path + ": cannot open file for writing");
  write_u32(labs, kLabelsMagic);
  write_u32(labs, static_cast<uint32_t>(ds.size()));
  std::vector<unsigned char> lraw(ds.labels.begin(), ds.labels.end());
  labs.write(reinterpret_cast<const char*>(lraw.data()),
             static_cast<std::streamsize>(lraw.size()));
  if (!labs) throw FormatError(labels_path + ": write failed");
}

template LabeledDataset<float> load_idx<float>(const std::string&, const std::string&);
template LabeledDataset<double> load_idx<double>(const std::string&, const std::string&);
template void save_idx<float>(const LabeledDataset<float>&, const std::string&,
                              const std::string&);
template void save_idx<double>(const LabeledDataset<double>&, const std::string&,
                               const std::string&);

}  // namespace synergy
