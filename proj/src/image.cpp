#include "clippo/image.hpp"

#include <algorithm>
#include <bit>
#include <cctype>
#include <cmath>
#include <fstream>
#include <string>

#include "clippo/errors.hpp"
#include "clippo/rng.hpp"

namespace clippo {

RenderedImage resize_bilinear(const RenderedImage& image, int out_height, int out_width) {
  if (out_height <= 0 || out_width <= 0) throw ShapeError("resize target must be positive");
  if (image.height <= 0 || image.width <= 0) throw ShapeError("cannot resize an empty image");
  RenderedImage out(out_height, out_width, image.channels);
  const double sy_scale = static_cast<double>(image.height) / out_height;
  const double sx_scale = static_cast<double>(image.width) / out_width;
  for (int oy = 0; oy < out_height; ++oy) {
    const double sy = std::clamp((oy + 0.5) * sy_scale - 0.5, 0.0, static_cast<double>(image.height - 1));
    const int y0 = static_cast<int>(std::floor(sy));
    const int y1 = std::min(y0 + 1, image.height - 1);
    const double wy = sy - y0;
    for (int ox = 0; ox < out_width; ++ox) {
      const double sx = std::clamp((ox + 0.5) * sx_scale - 0.5, 0.0, static_cast<double>(image.width - 1));
      const int x0 = static_cast<int>(std::floor(sx));
      const int x1 = std::min(x0 + 1, image.width - 1);
      const double wx = sx - x0;
      for (int c = 0; c < image.channels; ++c) {
        const double top = image.at(y0, x0, c) * (1.0 - wx) + image.at(y0, x1, c) * wx;
        const double bottom = image.at(y1, x0, c) * (1.0 - wx) + image.at(y1, x1, c) * wx;
        out.at(oy, ox, c) = static_cast<float>(top * (1.0 - wy) + bottom * wy);
      }
    }
  }
  return out;
}

RenderedImage convert_channels(const RenderedImage& image, int channels) {
  if (image.channels == channels) return image;
  RenderedImage out(image.height, image.width, channels);
  for (int y = 0; y < image.height; ++y) {
    for (int x = 0; x < image.width; ++x) {
      if (image.channels == 1 && channels == 3) {
        for (int c = 0; c < 3; ++c) out.at(y, x, c) = image.at(y, x, 0);
      } else if (image.channels == 3 && channels == 1) {
        out.at(y, x, 0) = (image.at(y, x, 0) + image.at(y, x, 1) + image.at(y, x, 2)) / 3.0f;
      } else {
        throw ShapeError("unsupported channel conversion " + std::to_string(image.channels) + " -> " +
                         std::to_string(channels));
      }
    }
  }
  return out;
}

std::uint8_t to_byte(float v) {
  const double scaled = (std::clamp(static_cast<double>(v), -1.0, 1.0) + 1.0) * 0.5 * 255.0;
  return static_cast<std::uint8_t>(std::lround(scaled));
}

void write_pnm(const RenderedImage& image, const std::filesystem::path& path) {
  if (image.channels != 1 && image.channels != 3) throw ShapeError("netpbm output needs 1 or 3 channels");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << (image.channels == 1 ? "P5" : "P6") << '\n' << image.width << ' ' << image.height << "\n255\n";
  std::string bytes(image.pixels.size(), '\0');
  std::transform(image.pixels.begin(), image.pixels.end(), bytes.begin(),
                 [](float v) { return static_cast<char>(to_byte(v)); });
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing " + path.string());
}

namespace {

int read_header_int(std::istream& in) {
  int c = in.peek();
  while (c != EOF) {
    if (c == '#') {
      std::string skip;
      std::getline(in, skip);
    } else if (std::isspace(c)) {
      in.get();
    } else {
      break;
    }
    c = in.peek();
  }
  int v = -1;
  in >> v;
  return v;
}

}  // namespace

RenderedImage read_pnm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open image " + path.string());
  std::string magic(2, '\0');
  in.read(magic.data(), 2);
  int channels = 0;
  if (magic == "P5") {
    channels = 1;
  } else if (magic == "P6") {
    channels = 3;
  } else {
    throw IoError("not a binary netpbm image: " + path.string());
  }
  const int width = read_header_int(in);
  const int height = read_header_int(in);
  const int maxval = read_header_int(in);
  if (width <= 0 || height <= 0 || maxval <= 0 || maxval > 255) throw IoError("bad netpbm header: " + path.string());
  in.get();
  RenderedImage image(height, width, channels);
  std::string bytes(image.pixels.size(), '\0');
  in.read(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (in.gcount() != static_cast<std::streamsize>(bytes.size())) throw IoError("truncated image: " + path.string());
  for (std::size_t i = 0; i < bytes.size(); ++i) {
    const auto b = static_cast<unsigned char>(bytes[i]);
    image.pixels[i] = static_cast<float>(2.0 * b / maxval - 1.0);
  }
  return image;
}

std::uint64_t pixel_digest(const RenderedImage& image) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  const auto mix = [&h](std::uint32_t v) {
    for (int i = 0; i < 4; ++i) {
      const char byte = static_cast<char>((v >> (8 * i)) & 0xffu);
      h = fnv1a64(std::string_view(&byte, 1), h);
    }
  };
  mix(static_cast<std::uint32_t>(image.height));
  mix(static_cast<std::uint32_t>(image.width));
  mix(static_cast<std::uint32_t>(image.channels));
  for (float v : image.pixels) mix(std::bit_cast<std::uint32_t>(v));
  return h;
}

}  // namespace clippo
