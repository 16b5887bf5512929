#include "gsrig/render.hpp"

#include <cstring>
#include <fstream>
#include <sstream>

#ifdef GSRIG_HAVE_ZLIB
#include <zlib.h>
#endif

namespace gsrig {

void save_ppm(const Image& image, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error("IoError", "cannot write " + path);
  f << "P6\n" << image.width << " " << image.height << "\n255\n";
  f.write(reinterpret_cast<const char*>(image.data.data()),
          static_cast<std::streamsize>(image.data.size()));
  if (!f) throw Error("IoError", "short write to " + path);
}

Image load_ppm(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error("IoError", "cannot open " + path);
  std::string magic;
  int w = 0, h = 0, maxval = 0;
  f >> magic >> w >> h >> maxval;
  if (magic != "P6" || w <= 0 || h <= 0 || maxval != 255)
    throw Error("ParseError", "unsupported ppm header in " + path);
  f.get();  // the single whitespace after the header
  Image img(w, h);
  f.read(reinterpret_cast<char*>(img.data.data()),
         static_cast<std::streamsize>(img.data.size()));
  if (f.gcount() != static_cast<std::streamsize>(img.data.size()))
    throw Error("ParseError", "truncated ppm payload in " + path);
  return img;
}

bool png_supported() {
#ifdef GSRIG_HAVE_ZLIB
  return true;
#else
  return false;
#endif
}

#ifdef GSRIG_HAVE_ZLIB
namespace {

void put_u32(std::string& out, uint32_t v) {
  out.push_back(static_cast<char>(v >> 24));
  out.push_back(static_cast<char>(v >> 16));
  out.push_back(static_cast<char>(v >> 8));
  out.push_back(static_cast<char>(v));
}

void write_chunk(std::ofstream& f, const char type[4], const std::string& data) {
  std::string head;
  put_u32(head, static_cast<uint32_t>(data.size()));
  f.write(head.data(), 4);
  f.write(type, 4);
  f.write(data.data(), static_cast<std::streamsize>(data.size()));
  uLong crc = crc32(0L, nullptr, 0);
  crc = crc32(crc, reinterpret_cast<const Bytef*>(type), 4);
  crc = crc32(crc, reinterpret_cast<const Bytef*>(data.data()),
              static_cast<uInt>(data.size()));
  std::string tail;
  put_u32(tail, static_cast<uint32_t>(crc));
  f.write(tail.data(), 4);
}

}  // namespace

void save_png(const Image& image, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error("IoError", "cannot write " + path);
  static const unsigned char sig[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
  f.write(reinterpret_cast<const char*>(sig), 8);

  std::string ihdr;
  put_u32(ihdr, static_cast<uint32_t>(image.width));
  put_u32(ihdr, static_cast<uint32_t>(image.height));
  ihdr.push_back(8);   // bit depth
  ihdr.push_back(2);   // truecolor
  ihdr.push_back(0);   // compression
  ihdr.push_back(0);   // filter
  ihdr.push_back(0);   // no interlace
  write_chunk(f, "IHDR", ihdr);

  // Raw scanlines, each prefixed with filter type 0.
  const size_t stride = static_cast<size_t>(image.width) * 3;
  std::string raw;
  raw.reserve((stride + 1) * static_cast<size_t>(image.height));
  for (int y = 0; y < image.height; ++y) {
    raw.push_back(0);
    raw.append(reinterpret_cast<const char*>(image.data.data() + y * stride), stride);
  }
  uLongf dest_len = compressBound(static_cast<uLong>(raw.size()));
  std::string compressed(dest_len, '\0');
  if (compress2(reinterpret_cast<Bytef*>(compressed.data()), &dest_len,
                reinterpret_cast<const Bytef*>(raw.data()),
                static_cast<uLong>(raw.size()), 6) != Z_OK)
    throw Error("IoError", "png deflate failed for " + path);
  compressed.resize(dest_len);
  write_chunk(f, "IDAT", compressed);
  write_chunk(f, "IEND", "");
  if (!f) throw Error("IoError", "short write to " + path);
}
#else
void save_png(const Image&, const std::string&) {
  throw Error("Unsupported", "png output requires zlib");
}
#endif

void save_image(const Image& image, const std::string& path) {
  auto dot = path.find_last_of('.');
  std::string ext = dot == std::string::npos ? "" : path.substr(dot + 1);
  if (ext == "png") {
    save_png(image, path);
  } else if (ext == "ppm") {
    save_ppm(image, path);
  } else {
    throw Error("Unsupported", "unknown image extension ." + ext);
  }
}

}  // namespace gsrig
