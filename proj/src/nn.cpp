#include "gsrig/nn.hpp"

#include <cstring>
#include <fstream>

namespace gsrig::nn {

void write_checkpoint_file(const std::string& path, const nlohmann::json& manifest,
                           const std::vector<char>& blob) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw Error("IoError", "cannot open for writing: " + path);
  f.write(kCkptMagic, 8);
  std::string m = manifest.dump();
  uint64_t len = m.size();
  unsigned char lenb[8];
  for (int i = 0; i < 8; ++i) lenb[i] = static_cast<unsigned char>((len >> (8 * i)) & 0xff);
  f.write(reinterpret_cast<const char*>(lenb), 8);
  f.write(m.data(), static_cast<std::streamsize>(m.size()));
  f.write(blob.data(), static_cast<std::streamsize>(blob.size()));
  if (!f) throw Error("IoError", "write failed: " + path);
}

RawCheckpoint load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error("IoError", "cannot open: " + path);
  char magic[8];
  f.read(magic, 8);
  if (!f || std::memcmp(magic, kCkptMagic, 8) != 0)
    throw Error("BadCheckpoint", "bad magic: " + path);
  unsigned char lenb[8];
  f.read(reinterpret_cast<char*>(lenb), 8);
  if (!f) throw Error("BadCheckpoint", "truncated header: " + path);
  uint64_t len = 0;
  for (int i = 0; i < 8; ++i) len |= static_cast<uint64_t>(lenb[i]) << (8 * i);
  std::string mtext(len, '\0');
  f.read(mtext.data(), static_cast<std::streamsize>(len));
  if (!f) throw Error("BadCheckpoint", "truncated manifest: " + path);

  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(mtext);
  } catch (const nlohmann::json::exception& e) {
    throw Error("BadCheckpoint", std::string("manifest parse: ") + e.what());
  }
  if (manifest.value("format", 0) != 1) throw Error("BadCheckpoint", "unsupported format");

  RawCheckpoint out;
  out.config = manifest.value("config", nlohmann::json::object());
  out.dtype = manifest.value("dtype", "");
  if (out.dtype != "f4" && out.dtype != "f8")
    throw Error("BadCheckpoint", "unknown dtype: " + out.dtype);
  const size_t ssize = out.dtype == "f4" ? 4 : 8;

  size_t blob_bytes = manifest.value("blob_bytes", size_t{0});
  std::vector<char> blob(blob_bytes);
  f.read(blob.data(), static_cast<std::streamsize>(blob_bytes));
  if (!f) throw Error("BadCheckpoint", "truncated blob: " + path);

  for (const auto& t : manifest.at("tensors")) {
    std::string name = t.at("name").get<std::string>();
    int r = t.at("rows").get<int>();
    int c = t.at("cols").get<int>();
    size_t offset = t.at("offset").get<size_t>();
    size_t bytes = static_cast<size_t>(r) * static_cast<size_t>(c) * ssize;
    if (r < 0 || c < 0 || offset + bytes > blob.size())
      throw Error("BadCheckpoint", "tensor out of blob bounds: " + name);
    Mat<double> m(r, c);
    const char* src = blob.data() + offset;
    for (int i = 0; i < r; ++i)
      for (int j = 0; j < c; ++j) {
        if (ssize == 4) {
          float v;
          std::memcpy(&v, src, 4);
          m(i, j) = static_cast<double>(v);
          src += 4;
        } else {
          double v;
          std::memcpy(&v, src, 8);
          m(i, j) = v;
          src += 8;
        }
      }
    out.tensors.emplace_back(std::move(name), std::move(m));
  }
  return out;
}

}  // namespace gsrig::nn
