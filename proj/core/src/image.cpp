#include "xmodal/image.hpp"

#include <png.h>
#include <stdio.h>

// jpeglib.h needs size_t and FILE declared first.
#include <jpeglib.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <csetjmp>
#include <fstream>
#include <memory>

#include "xmodal/errors.hpp"

namespace xmodal {

std::string_view modality_name(Modality m) {
  switch (m) {
    case Modality::kFace:
      return "face";
    case Modality::kSkull:
      return "skull";
    case Modality::kSketch:
      return "sketch";
  }
  return "face";
}

Modality parse_modality(std::string_view name) {
  if (name == "face") return Modality::kFace;
  if (name == "skull") return Modality::kSkull;
  if (name == "sketch") return Modality::kSketch;
  fail(ErrorCode::kParse, "unknown modality '" + std::string(name) + "'");
}

void ImageRecord::validate() const {
  if (width * height != pixels.size()) {
    fail(ErrorCode::kArgument, "image pixel count does not equal width*height");
  }
  for (double v : pixels) {
    if (!(v >= 0.0 && v <= 1.0)) fail(ErrorCode::kArgument, "image intensity outside [0,1]");
  }
}

namespace {

struct RgbRaster {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<unsigned char> rgb;
};

RgbRaster decode_png(const std::string& path) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.c_str())) {
    fail(ErrorCode::kDecode, "cannot decode PNG '" + path + "': " + image.message);
  }
  image.format = PNG_FORMAT_RGB;
  RgbRaster out;
  out.width = image.width;
  out.height = image.height;
  out.rgb.resize(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, out.rgb.data(), 0, nullptr)) {
    std::string msg = image.message;
    png_image_free(&image);
    fail(ErrorCode::kDecode, "cannot decode PNG '" + path + "': " + msg);
  }
  return out;
}

struct JpegErrorManager {
  jpeg_error_mgr base;
  std::jmp_buf jump;
};

void jpeg_error_exit(j_common_ptr cinfo) {
  auto* err = reinterpret_cast<JpegErrorManager*>(cinfo->err);
  std::longjmp(err->jump, 1);
}

RgbRaster decode_jpeg(const std::string& path) {
  std::unique_ptr<FILE, int (*)(FILE*)> file(std::fopen(path.c_str(), "rb"), &std::fclose);
  if (!file) fail(ErrorCode::kDecode, "cannot open '" + path + "'");
  jpeg_decompress_struct cinfo{};
  JpegErrorManager jerr{};
  cinfo.err = jpeg_std_error(&jerr.base);
  jerr.base.error_exit = jpeg_error_exit;
  RgbRaster out;
  if (setjmp(jerr.jump)) {
    jpeg_destroy_decompress(&cinfo);
    fail(ErrorCode::kDecode, "cannot decode JPEG '" + path + "'");
  }
  jpeg_create_decompress(&cinfo);
  jpeg_stdio_src(&cinfo, file.get());
  jpeg_read_header(&cinfo, TRUE);
  cinfo.out_color_space = JCS_RGB;
  jpeg_start_decompress(&cinfo);
  out.width = cinfo.output_width;
  out.height = cinfo.output_height;
  out.rgb.resize(out.width * out.height * 3);
  while (cinfo.output_scanline < cinfo.output_height) {
    JSAMPROW row = out.rgb.data() + static_cast<std::size_t>(cinfo.output_scanline) * out.width * 3;
    jpeg_read_scanlines(&cinfo, &row, 1);
  }
  jpeg_finish_decompress(&cinfo);
  jpeg_destroy_decompress(&cinfo);
  return out;
}

std::size_t reflect101(long i, std::size_t n) {
  if (n == 1) return 0;
  const long last = static_cast<long>(n) - 1;
  while (i < 0 || i > last) {
    if (i < 0) i = -i;
    if (i > last) i = 2 * last - i;
  }
  return static_cast<std::size_t>(i);
}

}  // namespace

ImageRecord load_image(const std::string& path, ImageSize target) {
  if (target.width == 0 || target.height == 0) {
    fail(ErrorCode::kArgument, "target image size must be nonzero");
  }
  std::array<unsigned char, 8> magic{};
  {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorCode::kDecode, "cannot open image '" + path + "'");
    in.read(reinterpret_cast<char*>(magic.data()), magic.size());
    if (in.gcount() < 3) fail(ErrorCode::kDecode, "file too short to be an image: '" + path + "'");
  }
  RgbRaster raster;
  if (magic[0] == 0x89 && magic[1] == 'P' && magic[2] == 'N' && magic[3] == 'G') {
    raster = decode_png(path);
  } else if (magic[0] == 0xFF && magic[1] == 0xD8 && magic[2] == 0xFF) {
    raster = decode_jpeg(path);
  } else {
    fail(ErrorCode::kDecode, "unrecognized image format: '" + path + "'");
  }
  ImageRecord gray(raster.width, raster.height);
  for (std::size_t i = 0; i < gray.pixels.size(); ++i) {
    const double r = raster.rgb[3 * i], g = raster.rgb[3 * i + 1], b = raster.rgb[3 * i + 2];
    const double luma = 0.299 * r + 0.587 * g + 0.114 * b;
    gray.pixels[i] = std::clamp(luma / 255.0, 0.0, 1.0);
  }
  return resize_bilinear(gray, target);
}

ImageRecord resize_bilinear(const ImageRecord& img, ImageSize target) {
  if (target.width == 0 || target.height == 0) {
    fail(ErrorCode::kArgument, "target image size must be nonzero");
  }
  ImageRecord out(target.width, target.height);
  out.modality = img.modality;
  out.subject_id = img.subject_id;
  out.view = img.view;
  if (target.width == img.width && target.height == img.height) {
    out.pixels = img.pixels;
    return out;
  }
  const double sx = static_cast<double>(img.width) / static_cast<double>(target.width);
  const double sy = static_cast<double>(img.height) / static_cast<double>(target.height);
  const double max_x = static_cast<double>(img.width - 1);
  const double max_y = static_cast<double>(img.height - 1);
  for (std::size_t r = 0; r < target.height; ++r) {
    const double fy = std::clamp((static_cast<double>(r) + 0.5) * sy - 0.5, 0.0, max_y);
    const auto y0 = static_cast<std::size_t>(fy);
    const std::size_t y1 = std::min(y0 + 1, img.height - 1);
    const double ty = fy - static_cast<double>(y0);
    for (std::size_t c = 0; c < target.width; ++c) {
      const double fx = std::clamp((static_cast<double>(c) + 0.5) * sx - 0.5, 0.0, max_x);
      const auto x0 = static_cast<std::size_t>(fx);
      const std::size_t x1 = std::min(x0 + 1, img.width - 1);
      const double tx = fx - static_cast<double>(x0);
      const double top = img.at(y0, x0) + tx * (img.at(y0, x1) - img.at(y0, x0));
      const double bot = img.at(y1, x0) + tx * (img.at(y1, x1) - img.at(y1, x0));
      out.at(r, c) = std::clamp(top + ty * (bot - top), 0.0, 1.0);
    }
  }
  return out;
}

std::vector<double> sobel_magnitude(const ImageRecord& img) {
  std::vector<double> mag(img.pixel_count(), 0.0);
  const auto w = img.width, h = img.height;
  for (std::size_t r = 0; r < h; ++r) {
    const std::size_t rm = reflect101(static_cast<long>(r) - 1, h);
    const std::size_t rp = reflect101(static_cast<long>(r) + 1, h);
    for (std::size_t c = 0; c < w; ++c) {
      const std::size_t cm = reflect101(static_cast<long>(c) - 1, w);
      const std::size_t cp = reflect101(static_cast<long>(c) + 1, w);
      const double gx = (img.at(rm, cp) + 2.0 * img.at(r, cp) + img.at(rp, cp)) -
                        (img.at(rm, cm) + 2.0 * img.at(r, cm) + img.at(rp, cm));
      const double gy = (img.at(rp, cm) + 2.0 * img.at(rp, c) + img.at(rp, cp)) -
                        (img.at(rm, cm) + 2.0 * img.at(rm, c) + img.at(rm, cp));
      mag[r * w + c] = std::sqrt(gx * gx + gy * gy);
    }
  }
  return mag;
}

ImageRecord extract_contours(const ImageRecord& img, double blend) {
  if (!(blend >= 0.0 && blend <= 1.0)) fail(ErrorCode::kArgument, "contour blend must lie in [0,1]");
  ImageRecord out = img;
  if (blend == 0.0) return out;
  const std::vector<double> mag = sobel_magnitude(img);
  const double mx = mag.empty() ? 0.0 : *std::max_element(mag.begin(), mag.end());
  for (std::size_t i = 0; i < out.pixels.size(); ++i) {
    const double edge = mx > 0.0 ? mag[i] / mx : 0.0;
    out.pixels[i] = std::clamp(blend * edge + (1.0 - blend) * img.pixels[i], 0.0, 1.0);
  }
  return out;
}

void save_png(const ImageRecord& img, const std::string& path) {
  std::vector<unsigned char> bytes(img.pixel_count());
  for (std::size_t i = 0; i < bytes.size(); ++i) {
    bytes[i] = static_cast<unsigned char>(std::lround(std::clamp(img.pixels[i], 0.0, 1.0) * 255.0));
  }
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(img.width);
  image.height = static_cast<png_uint_32>(img.height);
  image.format = PNG_FORMAT_GRAY;
  if (!png_image_write_to_file(&image, path.c_str(), 0, bytes.data(), 0, nullptr)) {
    fail(ErrorCode::kIo, "cannot write PNG '" + path + "': " + image.message);
  }
}

}  // namespace xmodal
