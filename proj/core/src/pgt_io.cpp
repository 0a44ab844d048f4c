#include "mpmflow/pgt_io.hpp"

#include <cstdio>
#include <cstring>
#include <memory>

#include "mpmflow/error.hpp"

namespace mpmflow {

namespace {

constexpr char kMagic[4] = {'P', 'G', 'T', '1'};

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

void write_u32(std::FILE* f, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v),
                        static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16),
                        static_cast<unsigned char>(v >> 24)};
  if (std::fwrite(b, 1, 4, f) != 4) throw FormatError("pgt: short write");
}

std::uint32_t read_u32(std::FILE* f) {
  unsigned char b[4];
  if (std::fread(b, 1, 4, f) != 4) throw FormatError("pgt: short read");
  return static_cast<std::uint32_t>(b[0]) |
         (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) |
         (static_cast<std::uint32_t>(b[3]) << 24);
}

void write_f32_block(std::FILE* f, const std::vector<float>& v) {
  for (float x : v) {
    std::uint32_t u;
    std::memcpy(&u, &x, 4);
    write_u32(f, u);
  }
}

void read_f32_block(std::FILE* f, std::vector<float>& v) {
  for (float& x : v) {
    std::uint32_t u = read_u32(f);
    std::memcpy(&x, &u, 4);
  }
}

}  // namespace

void save_pgt(const std::string& path, const PressureTensors& t) {
  FilePtr f(std::fopen(path.c_str(), "wb"));
  if (!f) throw FormatError("pgt: cannot open for write: " + path);
  if (std::fwrite(kMagic, 1, 4, f.get()) != 4)
    throw FormatError("pgt: short write");
  write_u32(f.get(), static_cast<std::uint32_t>(t.pd));
  write_u32(f.get(), static_cast<std::uint32_t>(t.ph));
  write_u32(f.get(), static_cast<std::uint32_t>(t.pw));
  write_u32(f.get(), static_cast<std::uint32_t>(t.frame_index));
  write_u32(f.get(), 3);
  write_f32_block(f.get(), t.xf);
  write_f32_block(f.get(), t.xs);
  write_f32_block(f.get(), t.xi);
  if (std::fflush(f.get()) != 0) throw FormatError("pgt: flush failed");
}

PressureTensors load_pgt(const std::string& path) {
  FilePtr f(std::fopen(path.c_str(), "rb"));
  if (!f) throw FormatError("pgt: cannot open for read: " + path);
  char magic[4];
  if (std::fread(magic, 1, 4, f.get()) != 4 ||
      std::memcmp(magic, kMagic, 4) != 0)
    throw FormatError("pgt: bad magic in " + path);
  PressureTensors t;
  t.pd = static_cast<std::int32_t>(read_u32(f.get()));
  t.ph = static_cast<std::int32_t>(read_u32(f.get()));
  t.pw = static_cast<std::int32_t>(read_u32(f.get()));
  if (t.pd < 5 || t.ph < 5 || t.pw < 5 || t.pd > 4096 || t.ph > 4096 ||
      t.pw > 4096)
    throw FormatError("pgt: implausible dims in " + path);
  t.frame_index = static_cast<std::int64_t>(read_u32(f.get()));
  std::uint32_t channels = read_u32(f.get());
  if (channels != 3) throw FormatError("pgt: expected 3 channels");
  t.xf.resize(t.voxels());
  t.xs.resize(t.voxels());
  t.xi.resize(t.voxels());
  read_f32_block(f.get(), t.xf);
  read_f32_block(f.get(), t.xs);
  read_f32_block(f.get(), t.xi);
  return t;
}

}  // namespace mpmflow
