#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

#include "roadscan/error.hpp"
#include "roadscan/geo_mapping.hpp"

namespace roadscan {

namespace {

constexpr std::uint16_t kGpsIfdPointer = 0x8825;
constexpr std::uint16_t kGpsLatitudeRef = 1;
constexpr std::uint16_t kGpsLatitude = 2;
constexpr std::uint16_t kGpsLongitudeRef = 3;
constexpr std::uint16_t kGpsLongitude = 4;

constexpr std::uint16_t kTypeAscii = 2;
constexpr std::uint16_t kTypeLong = 4;
constexpr std::uint16_t kTypeRational = 5;
constexpr std::uint16_t kTypeSRational = 10;

// Bounds-checked view over the TIFF structure inside an APP1 Exif segment.
class TiffReader {
 public:
  explicit TiffReader(std::span<const std::uint8_t> data) : data_(data) {
    if (data_.size() < 8) throw MalformedExif("EXIF TIFF header truncated");
    if (data_[0] == 'I' && data_[1] == 'I') {
      little_ = true;
    } else if (data_[0] == 'M' && data_[1] == 'M') {
      little_ = false;
    } else {
      throw MalformedExif("EXIF TIFF header has unknown byte order");
    }
    if (u16(2) != 42) throw MalformedExif("EXIF TIFF header magic is not 42");
  }

  std::uint32_t first_ifd() const { return u32(4); }

  std::uint16_t u16(std::size_t off) const {
    need(off, 2);
    return little_ ? static_cast<std::uint16_t>(data_[off] | data_[off + 1] << 8)
                   : static_cast<std::uint16_t>(data_[off] << 8 | data_[off + 1]);
  }

  std::uint32_t u32(std::size_t off) const {
    need(off, 4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) {
      const std::uint32_t b = data_[off + static_cast<std::size_t>(i)];
      v |= little_ ? b << (8 * i) : b << (8 * (3 - i));
    }
    return v;
  }

  std::uint8_t u8(std::size_t off) const {
    need(off, 1);
    return data_[off];
  }

  void need(std::size_t off, std::size_t n) const {
    if (off > data_.size() || n > data_.size() - off) {
      throw MalformedExif("EXIF offset points outside the segment");
    }
  }

 private:
  std::span<const std::uint8_t> data_;
  bool little_ = true;
};

struct IfdEntry {
  std::uint16_t tag;
  std::uint16_t type;
  std::uint32_t count;
  std::size_t value_offset;  // where the value lives (inline field or pointed-to data)
};

std::vector<IfdEntry> read_ifd(const TiffReader& r, std::uint32_t offset) {
  const std::uint16_t n = r.u16(offset);
  std::vector<IfdEntry> entries;
  entries.reserve(n);
  for (std::uint16_t i = 0; i < n; ++i) {
    const std::size_t at = offset + 2u + 12u * i;
    IfdEntry e{r.u16(at), r.u16(at + 2), r.u32(at + 4), at + 8};
    std::size_t unit = 0;
    switch (e.type) {
      case 1: case 2: case 6: case 7: unit = 1; break;
      case 3: case 8: unit = 2; break;
      case 4: case 9: case 11: unit = 4; break;
      case 5: case 10: case 12: unit = 8; break;
      default: unit = 0;
    }
    if (unit != 0 && static_cast<std::uint64_t>(unit) * e.count > 4) e.value_offset = r.u32(at + 8);
    entries.push_back(e);
  }
  return entries;
}

const IfdEntry* find(const std::vector<IfdEntry>& entries, std::uint16_t tag) {
  for (const auto& e : entries) {
    if (e.tag == tag) return &e;
  }
  return nullptr;
}

char read_ref(const TiffReader& r, const IfdEntry& e, const char* allowed) {
  if (e.type != kTypeAscii || e.count < 1) throw MalformedExif("GPS reference tag is not ASCII");
  const char c = static_cast<char>(r.u8(e.value_offset));
  if (std::strchr(allowed, c) == nullptr || c == '\0') {
    throw MalformedExif(std::string("GPS reference '") + c + "' is not one of " + allowed);
  }
  return c;
}

double read_dms(const TiffReader& r, const IfdEntry& e, char ref) {
  if ((e.type != kTypeRational && e.type != kTypeSRational) || e.count != 3) {
    throw MalformedExif("GPS coordinate tag is not three rationals");
  }
  r.need(e.value_offset, 24);
  double parts[3];
  for (std::size_t i = 0; i < 3; ++i) {
    const auto num = r.u32(e.value_offset + 8 * i);
    const auto den = r.u32(e.value_offset + 8 * i + 4);
    if (den == 0) throw MalformedExif("GPS coordinate has a zero denominator");
    if (e.type == kTypeSRational) {
      parts[i] = static_cast<double>(static_cast<std::int32_t>(num)) /
                 static_cast<double>(static_cast<std::int32_t>(den));
    } else {
      parts[i] = static_cast<double>(num) / static_cast<double>(den);
    }
  }
  return dms_to_degrees(parts[0], parts[1], parts[2], ref);
}

std::optional<GeoPoint> gps_from_tiff(std::span<const std::uint8_t> tiff) {
  const TiffReader r(tiff);
  const auto ifd0 = read_ifd(r, r.first_ifd());
  const auto* gps_ptr = find(ifd0, kGpsIfdPointer);
  if (gps_ptr == nullptr) return std::nullopt;
  if (gps_ptr->type != kTypeLong || gps_ptr->count != 1) {
    throw MalformedExif("GPS IFD pointer has the wrong type");
  }
  const auto gps = read_ifd(r, r.u32(gps_ptr->value_offset));
  const auto* lat_ref = find(gps, kGpsLatitudeRef);
  const auto* lat = find(gps, kGpsLatitude);
  const auto* lon_ref = find(gps, kGpsLongitudeRef);
  const auto* lon = find(gps, kGpsLongitude);
  if (!lat_ref || !lat || !lon_ref || !lon) return std::nullopt;

  GeoPoint p{read_dms(r, *lat, read_ref(r, *lat_ref, "NS")),
             read_dms(r, *lon, read_ref(r, *lon_ref, "EW"))};
  if (!is_valid(p)) throw MalformedExif("GPS position outside valid latitude/longitude range");
  return p;
}

}  // namespace

double dms_to_degrees(double degrees, double minutes, double seconds, char ref) {
  const double v = degrees + minutes / 60.0 + seconds / 3600.0;
  return (ref == 'S' || ref == 'W') ? -v : v;
}

std::optional<GeoPoint> extract_gps(std::span<const std::uint8_t> jpeg) {
  if (jpeg.size() < 4 || jpeg[0] != 0xFF || jpeg[1] != 0xD8) {
    throw MalformedExif("not a JPEG stream");
  }
  std::size_t pos = 2;
  while (pos + 1 < jpeg.size()) {
    if (jpeg[pos] != 0xFF) throw MalformedExif("JPEG marker expected");
    while (pos + 1 < jpeg.size() && jpeg[pos + 1] == 0xFF) ++pos;  // fill bytes
    if (pos + 1 >= jpeg.size()) break;
    const std::uint8_t marker = jpeg[pos + 1];
    if (marker == 0xD9 || marker == 0xDA) break;  // EOI / start of scan: no more metadata
    if (marker == 0x01 || (marker >= 0xD0 && marker <= 0xD7)) {
      pos += 2;
      continue;
    }
    if (pos + 4 > jpeg.size()) throw MalformedExif("JPEG segment header truncated");
    const std::size_t len = static_cast<std::size_t>(jpeg[pos + 2]) << 8 | jpeg[pos + 3];
    if (len < 2 || pos + 2 + len > jpeg.size()) throw MalformedExif("JPEG segment truncated");
    const auto payload = jpeg.subspan(pos + 4, len - 2);
    static constexpr std::uint8_t kExif[] = {'E', 'x', 'i', 'f', 0, 0};
    if (marker == 0xE1 && payload.size() >= 6 && std::memcmp(payload.data(), kExif, 6) == 0) {
      return gps_from_tiff(payload.subspan(6));
    }
    pos += 2 + len;
  }
  return std::nullopt;
}

std::optional<GeoPoint> extract_gps(const std::filesystem::path& jpeg_file) {
  std::ifstream in(jpeg_file, std::ios::binary);
  if (!in) throw IoError("cannot open '" + jpeg_file.string() + "'");
  const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                        std::istreambuf_iterator<char>());
  try {
    return extract_gps(std::span<const std::uint8_t>(bytes));
  } catch (const MalformedExif& e) {
    throw MalformedExif(jpeg_file.string() + ": " + e.what());
  }
}

}  // namespace roadscan
