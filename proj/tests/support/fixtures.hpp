#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>
#include <vector>

namespace roadscan::testing {

/// Scratch directory removed on destruction.
class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    const auto stamp = std::chrono::steady_clock::now().time_since_epoch().count();
    path_ = std::filesystem::temp_directory_path() /
            ("roadscan_test_" + std::to_string(stamp) + "_" + std::to_string(counter++));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline void write_file(const std::filesystem::path& p, const std::string& text) {
  std::filesystem::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary);
  out << text;
}

inline void write_bytes(const std::filesystem::path& p, const std::vector<std::uint8_t>& bytes) {
  std::filesystem::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

/// GPS payload for a synthetic EXIF block. Each coordinate is three
/// (numerator, denominator) rationals.
struct GpsTags {
  std::uint32_t lat[6] = {0, 1, 0, 1, 0, 1};
  std::uint32_t lon[6] = {0, 1, 0, 1, 0, 1};
  char lat_ref = 'N';
  char lon_ref = 'E';
  bool big_endian = false;
  std::uint16_t coordinate_type = 5;  // RATIONAL
};

/// Little TIFF/EXIF writer: IFD0 holding only the GPS IFD pointer, and a GPS
/// IFD with LatitudeRef, Latitude, LongitudeRef, Longitude.
class ExifWriter {
 public:
  explicit ExifWriter(bool big_endian) : be_(big_endian) {}

  std::vector<std::uint8_t> tiff(const GpsTags* gps) {
    buf_.clear();
    if (be_) {
      put8('M'); put8('M');
    } else {
      put8('I'); put8('I');
    }
    put16(42);
    put32(8);
    if (gps == nullptr) {
      put16(0);  // empty IFD0
      put32(0);
      return buf_;
    }
    // IFD0: one entry -> GPS IFD at 8 + 2 + 12 + 4 = 26.
    put16(1);
    entry(0x8825, 4, 1, 26);
    put32(0);
    // GPS IFD: 4 entries -> data at 26 + 2 + 48 + 4 = 80.
    put16(4);
    entry(1, 2, 2, ascii(gps->lat_ref));
    entry(2, gps->coordinate_type, 3, 80);
    entry(3, 2, 2, ascii(gps->lon_ref));
    entry(4, gps->coordinate_type, 3, 104);
    put32(0);
    for (auto v : gps->lat) put32(v);
    for (auto v : gps->lon) put32(v);
    return buf_;
  }

 private:
  void put8(std::uint8_t v) { buf_.push_back(v); }
  void put16(std::uint16_t v) {
    if (be_) {
      put8(static_cast<std::uint8_t>(v >> 8)); put8(static_cast<std::uint8_t>(v));
    } else {
      put8(static_cast<std::uint8_t>(v)); put8(static_cast<std::uint8_t>(v >> 8));
    }
  }
  void put32(std::uint32_t v) {
    if (be_) {
      put16(static_cast<std::uint16_t>(v >> 16)); put16(static_cast<std::uint16_t>(v));
    } else {
      put16(static_cast<std::uint16_t>(v)); put16(static_cast<std::uint16_t>(v >> 16));
    }
  }
  // Inline ASCII value "<c>\0" laid out in file byte order.
  std::uint32_t ascii(char c) const {
    const auto b = static_cast<std::uint8_t>(c);
    return be_ ? static_cast<std::uint32_t>(b) << 24 : b;
  }
  void entry(std::uint16_t tag, std::uint16_t type, std::uint32_t count, std::uint32_t value) {
    put16(tag);
    put16(type);
    put32(count);
    put32(value);
  }

  bool be_;
  std::vector<std::uint8_t> buf_;
};

/// Minimal JPEG container: SOI, APP0 (JFIF), optional APP1 Exif, EOI.
inline std::vector<std::uint8_t> make_jpeg(const GpsTags* gps, bool with_exif = true) {
  std::vector<std::uint8_t> out = {0xFF, 0xD8};
  const std::vector<std::uint8_t> jfif = {'J', 'F', 'I', 'F', 0, 1, 1, 0, 0, 1, 0, 1, 0, 0};
  out.insert(out.end(), {0xFF, 0xE0, 0, static_cast<std::uint8_t>(jfif.size() + 2)});
  out.insert(out.end(), jfif.begin(), jfif.end());
  if (with_exif) {
    ExifWriter w(gps ? gps->big_endian : false);
    auto payload = std::vector<std::uint8_t>{'E', 'x', 'i', 'f', 0, 0};
    const auto tiff = w.tiff(gps);
    payload.insert(payload.end(), tiff.begin(), tiff.end());
    const auto len = payload.size() + 2;
    out.insert(out.end(), {0xFF, 0xE1, static_cast<std::uint8_t>(len >> 8),
                           static_cast<std::uint8_t>(len & 0xFF)});
    out.insert(out.end(), payload.begin(), payload.end());
  }
  out.insert(out.end(), {0xFF, 0xD9});
  return out;
}

/// GPS tags from whole degrees/minutes and seconds expressed in hundredths.
inline GpsTags gps_dms(std::uint32_t lat_d, std::uint32_t lat_m, std::uint32_t lat_cs, char lat_ref,
                       std::uint32_t lon_d, std::uint32_t lon_m, std::uint32_t lon_cs, char lon_ref) {
  GpsTags g;
  const std::uint32_t lat[6] = {lat_d, 1, lat_m, 1, lat_cs, 100};
  const std::uint32_t lon[6] = {lon_d, 1, lon_m, 1, lon_cs, 100};
  std::copy(std::begin(lat), std::end(lat), g.lat);
  std::copy(std::begin(lon), std::end(lon), g.lon);
  g.lat_ref = lat_ref;
  g.lon_ref = lon_ref;
  return g;
}

}  // namespace roadscan::testing
