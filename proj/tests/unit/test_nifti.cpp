#include <doctest.h>

#include <cstring>
#include <limits>
#include <set>

#include "mtseg/error.hpp"
#include "mtseg/nifti.hpp"
#include "oracles.hpp"

using namespace mtseg;

namespace {

ErrorCode code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("no error raised");
  return ErrorCode::InvalidArgument;
}

// Minimal uncompressed NIfTI-1 writer used only to craft inputs the library
// writer would never produce (NaN voxels, foreign layouts).
void write_raw_nifti(const std::filesystem::path& p, std::array<short, 3> dims, std::array<float, 3> pixdim,
                     const std::vector<float>& data) {
  char hdr[352] = {};
  const int sizeof_hdr = 348;
  std::memcpy(hdr, &sizeof_hdr, 4);
  short dim[8] = {3, dims[0], dims[1], dims[2], 1, 1, 1, 1};
  std::memcpy(hdr + 40, dim, sizeof dim);
  const short datatype = 16, bitpix = 32;
  std::memcpy(hdr + 70, &datatype, 2);
  std::memcpy(hdr + 72, &bitpix, 2);
  float pix[8] = {1.0f, pixdim[0], pixdim[1], pixdim[2], 1, 1, 1, 1};
  std::memcpy(hdr + 76, pix, sizeof pix);
  const float vox_offset = 352.0f;
  std::memcpy(hdr + 108, &vox_offset, 4);
  const float slope = 1.0f;
  std::memcpy(hdr + 112, &slope, 4);
  std::memcpy(hdr + 344, "n+1\0", 4);
  std::ofstream out(p, std::ios::binary);
  out.write(hdr, 352);
  out.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size() * 4));
}

}  // namespace

TEST_CASE("4x4x4 volume round-trips through write_volume and read_volume") {
  oracle::TempDir dir;
  ImageVolume v = oracle::random_image({4, 4, 4}, 7, -3.0, 12.0, {2.0, 2.0, 3.0});
  v.geometry.origin = {-10.25, 3.125, 77.0};
  for (auto& x : v.voxels) x = static_cast<double>(static_cast<float>(x));  // float32 storage
  for (const char* name : {"a.nii", "a.nii.gz"}) {
    write_volume(v, dir / name);
    const ImageVolume r = read_volume(dir / name);
    CHECK(r.geometry == v.geometry);
    CHECK(r.voxels == v.voxels);
  }
}

TEST_CASE("float64 storage is exact and geometry survives non-representable spacings") {
  oracle::TempDir dir;
  ImageVolume v = oracle::random_image({3, 5, 2}, 8, 0.0, 1.0, {0.1, 1.0 / 3.0, 2.7});
  v.geometry.origin = {0.1, 0.2, 0.3};
  write_volume(v, dir / "b.nii.gz", ImageStorage::Float64);
  const ImageVolume r = read_volume(dir / "b.nii.gz");
  CHECK(r.geometry == v.geometry);
  CHECK(r.voxels == v.voxels);
}

TEST_CASE("non-canonical orientation is preserved on disk") {
  oracle::TempDir dir;
  ImageVolume v = oracle::random_image({3, 4, 5}, 9);
  v.geometry.orientation = Orientation::from_code("LPS");
  for (auto& x : v.voxels) x = static_cast<double>(static_cast<float>(x));
  write_volume(v, dir / "c.nii.gz");
  const ImageVolume r = read_volume(dir / "c.nii.gz");
  CHECK(r.geometry.orientation.code() == "LPS");
  CHECK(r.voxels == v.voxels);
}

TEST_CASE("foreign header spacing (2,2,3) is reported") {
  oracle::TempDir dir;
  write_raw_nifti(dir / "s.nii", {2, 2, 2}, {2.0f, 2.0f, 3.0f}, std::vector<float>(8, 1.0f));
  const ImageVolume r = read_volume(dir / "s.nii");
  CHECK(r.geometry.spacing == Vec3{2.0, 2.0, 3.0});
  CHECK(r.geometry.dims == Dims{2, 2, 2});
}

TEST_CASE("NaN voxel is rejected") {
  oracle::TempDir dir;
  std::vector<float> data(8, 1.0f);
  data[5] = std::numeric_limits<float>::quiet_NaN();
  write_raw_nifti(dir / "n.nii", {2, 2, 2}, {1, 1, 1}, data);
  CHECK(code_of([&] { read_volume(dir / "n.nii"); }) == ErrorCode::NonFiniteVoxels);
}

TEST_CASE("label volumes keep their integer values") {
  oracle::TempDir dir;
  LabelVolume lv(oracle::grid({4, 3, 2}, {2, 2, 2}), 0, "default");
  lv.labels[1] = 1;
  lv.labels[7] = 5;
  write_volume(lv, dir / "l.nii.gz");
  const LabelVolume r = read_label_volume(dir / "l.nii.gz");
  CHECK(std::set<Label>(r.labels.begin(), r.labels.end()) == std::set<Label>{0, 1, 5});
  CHECK(r.labels == lv.labels);
  CHECK(r.schema_id == "default");

  lv.labels[3] = 1000;  // needs 16-bit storage
  write_volume(lv, dir / "w.nii.gz");
  CHECK(read_label_volume(dir / "w.nii.gz").labels == lv.labels);
}

TEST_CASE("non-integer data is not a label volume") {
  oracle::TempDir dir;
  write_raw_nifti(dir / "f.nii", {2, 1, 1}, {1, 1, 1}, {0.0f, 0.5f});
  CHECK(code_of([&] { read_label_volume(dir / "f.nii"); }) == ErrorCode::MalformedHeader);
}

TEST_CASE("I/O errors") {
  oracle::TempDir dir;
  CHECK(code_of([&] { read_volume(dir / "missing.nii.gz"); }) == ErrorCode::FileNotFound);
  oracle::write_file(dir / "junk.nii", "definitely not nifti");
  CHECK(code_of([&] { read_volume(dir / "junk.nii"); }) == ErrorCode::MalformedHeader);
  const ImageVolume v = oracle::random_image({2, 2, 2}, 1);
  CHECK(code_of([&] { write_volume(v, dir / "no" / "such" / "dir.nii"); }) == ErrorCode::IoFailure);
}

TEST_CASE("truncated gzip stream is malformed") {
  oracle::TempDir dir;
  write_volume(oracle::random_image({8, 8, 8}, 2), dir / "t.nii.gz");
  std::string bytes = oracle::slurp(dir / "t.nii.gz");
  bytes.resize(bytes.size() / 2);
  oracle::write_file(dir / "t.nii.gz", bytes);
  const ErrorCode c = code_of([&] { read_volume(dir / "t.nii.gz"); });
  CHECK((c == ErrorCode::MalformedHeader || c == ErrorCode::IoFailure));
}
