#include "fftat/image_io.hpp"

#include <png.h>

#include <cstdio>
#include <cstring>
#include <fstream>

namespace fftat {

namespace {

// skips whitespace and '#' comments between PPM header tokens
std::size_t ppm_token(std::istream& in, const std::string& path) {
  int c = in.get();
  while (c == ' ' || c == '\t' || c == '\r' || c == '\n' || c == '#') {
    if (c == '#')
      while (c != '\n' && c != EOF) c = in.get();
    c = in.get();
  }
  check(c != EOF, "'", path, "': truncated PPM header");
  std::size_t v = 0;
  bool any = false;
  while (c >= '0' && c <= '9') {
    v = v * 10 + std::size_t(c - '0');
    any = true;
    c = in.get();
  }
  check(any, "'", path, "': malformed PPM header");
  return v;
}

}  // namespace

Image read_ppm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  check(in.good(), "cannot open image '", path, "'");
  char magic[2] = {0, 0};
  in.read(magic, 2);
  check(magic[0] == 'P' && magic[1] == '6', "'", path, "': not a binary PPM (P6)");
  std::size_t w = ppm_token(in, path);
  std::size_t h = ppm_token(in, path);
  std::size_t maxval = ppm_token(in, path);
  check(w > 0 && h > 0, "'", path, "': empty image");
  check(maxval == 255, "'", path, "': unsupported maxval ", maxval, " (want 255)");
  std::vector<unsigned char> raw(3 * w * h);
  in.read(reinterpret_cast<char*>(raw.data()), std::streamsize(raw.size()));
  check(std::size_t(in.gcount()) == raw.size(), "'", path, "': truncated pixel data");
  Image img(h, w);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x)
      for (std::size_t c = 0; c < 3; ++c)
        img.at(c, y, x) = float(raw[(y * w + x) * 3 + c]) / 255.0f;
  return img;
}

void write_ppm(const std::string& path, const Image& img) {
  std::ofstream out(path, std::ios::binary);
  check(out.good(), "cannot write image '", path, "'");
  out << "P6\n" << img.w << " " << img.h << "\n255\n";
  std::vector<unsigned char> raw(3 * img.w * img.h);
  for (std::size_t y = 0; y < img.h; ++y)
    for (std::size_t x = 0; x < img.w; ++x)
      for (std::size_t c = 0; c < 3; ++c) {
        float v = img.at(c, y, x);
        v = v < 0.0f ? 0.0f : (v > 1.0f ? 1.0f : v);
        raw[(y * img.w + x) * 3 + c] = (unsigned char)(v * 255.0f + 0.5f);
      }
  out.write(reinterpret_cast<const char*>(raw.data()), std::streamsize(raw.size()));
  check(out.good(), "short write on image '", path, "'");
}

Image read_png(const std::string& path) {
  png_image pi;
  std::memset(&pi, 0, sizeof(pi));
  pi.version = PNG_IMAGE_VERSION;
  check(png_image_begin_read_from_file(&pi, path.c_str()) != 0, "cannot read PNG '", path,
        "': ", pi.message);
  pi.format = PNG_FORMAT_RGB;
  std::vector<unsigned char> raw(PNG_IMAGE_SIZE(pi));
  if (png_image_finish_read(&pi, nullptr, raw.data(), 0, nullptr) == 0) {
    std::string msg = pi.message;
    png_image_free(&pi);
    throw Error(strcat("cannot decode PNG '", path, "': ", msg));
  }
  const std::size_t w = pi.width, h = pi.height;
  Image img(h, w);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x)
      for (std::size_t c = 0; c < 3; ++c)
        img.at(c, y, x) = float(raw[(y * w + x) * 3 + c]) / 255.0f;
  return img;
}

Image load_image(const std::string& path) {
  auto ends_with = [&](const char* suf) {
    std::string s(suf);
    return path.size() >= s.size() && path.compare(path.size() - s.size(), s.size(), s) == 0;
  };
  if (ends_with(".ppm")) return read_ppm(path);
  if (ends_with(".png")) return read_png(path);
  throw Error(strcat("unsupported image format '", path, "' (want .ppm or .png)"));
}

Image resize_nearest(const Image& img, std::size_t side) {
  check(img.h > 0 && img.w > 0, "resize: empty image");
  if (img.h == side && img.w == side) return img;
  Image out(side, side);
  for (std::size_t y = 0; y < side; ++y) {
    const std::size_t sy = y * img.h / side;
    for (std::size_t x = 0; x < side; ++x) {
      const std::size_t sx = x * img.w / side;
      for (std::size_t c = 0; c < 3; ++c) out.at(c, y, x) = img.at(c, sy, sx);
    }
  }
  return out;
}

}  // namespace fftat
