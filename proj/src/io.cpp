#include "remotedet/io.hpp"

#include <png.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>
#include <sstream>

namespace remotedet {

namespace fs = std::filesystem;

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& path, const std::string& bytes) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ParseError("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw ParseError("write failed for " + path.string());
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double parse_double(const std::string& token, const std::string& where) {
  std::size_t used = 0;
  double v = 0;
  try {
    v = std::stod(token, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != token.size() || token.empty()) throw ParseError(where + ": expected a number, got '" + token + "'");
  return v;
}

// Little-endian primitive encoding.
template <class T>
void put(std::string& out, T v) {
  static_assert(std::is_trivially_copyable_v<T>);
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(buf, buf + sizeof(T));
  out.append(buf, sizeof(T));
}

class Reader {
 public:
  explicit Reader(const std::string& bytes) : bytes_(bytes) {}
  template <class T>
  T get() {
    need(sizeof(T));
    char buf[sizeof(T)];
    std::memcpy(buf, bytes_.data() + pos_, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(buf, buf + sizeof(T));
    pos_ += sizeof(T);
    T v;
    std::memcpy(&v, buf, sizeof(T));
    return v;
  }
  std::string text(std::size_t n) {
    need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > bytes_.size()) throw VersionError("checkpoint: truncated file");
  }
  const std::string& bytes_;
  std::size_t pos_ = 0;
};

constexpr char kMagic[4] = {'R', 'D', 'M', 'B'};
constexpr std::uint8_t kDtypeF64 = 1;

}  // namespace

Tensor load_png(const fs::path& path) {
  FilePtr f(std::fopen(path.c_str(), "rb"));
  if (!f) throw ParseError("cannot open " + path.string());
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw ParseError("libpng initialization failed");
  }
  std::vector<png_bytep> rows;
  std::vector<unsigned char> pixels;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw ParseError(path.string() + ": not a readable PNG");
  }
  png_init_io(png, f.get());
  png_read_info(png, info);
  png_set_expand(png);
  png_set_strip_16(png);
  png_set_strip_alpha(png);
  png_set_gray_to_rgb(png);
  png_read_update_info(png, info);
  const auto w = png_get_image_width(png, info), h = png_get_image_height(png, info);
  const auto stride = png_get_rowbytes(png, info);
  pixels.resize(stride * h);
  rows.resize(h);
  for (png_uint_32 y = 0; y < h; ++y) rows[y] = pixels.data() + y * stride;
  png_read_image(png, rows.data());
  png_destroy_read_struct(&png, &info, nullptr);

  Tensor img({3, static_cast<std::int64_t>(h), static_cast<std::int64_t>(w)});
  for (png_uint_32 y = 0; y < h; ++y)
    for (png_uint_32 x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c) img.at(c, y, x) = rows[y][3 * x + c] / 255.0;
  return img;
}

void save_png(const fs::path& path, const Tensor& image) {
  if (image.rank() != 3 || image.dim(0) != 3) throw DimensionError("save_png: expected [3,H,W], got " + shape_to_string(image.shape()));
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  FilePtr f(std::fopen(path.c_str(), "wb"));
  if (!f) throw ParseError("cannot write " + path.string());
  const auto h = image.dim(1), w = image.dim(2);
  std::vector<unsigned char> pixels(static_cast<std::size_t>(3 * h * w));
  for (std::int64_t y = 0; y < h; ++y)
    for (std::int64_t x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c)
        pixels[static_cast<std::size_t>((y * w + x) * 3 + c)] =
            static_cast<unsigned char>(std::lround(std::clamp(image.at(c, y, x), 0.0, 1.0) * 255.0));
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw ParseError("libpng initialization failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw ParseError("PNG encoding failed for " + path.string());
  }
  png_init_io(png, f.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(w), static_cast<png_uint_32>(h), 8, PNG_COLOR_TYPE_RGB,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (std::int64_t y = 0; y < h; ++y) png_write_row(png, pixels.data() + y * w * 3);
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

Tensor draw_detections(const Tensor& image, const std::vector<Detection>& dets) {
  static const std::array<std::array<double, 3>, 5> palette = {
      {{1.0, 1.0, 0.0}, {0.0, 1.0, 0.0}, {0.0, 1.0, 1.0}, {1.0, 0.0, 1.0}, {1.0, 1.0, 1.0}}};
  Tensor out = image;
  const auto h = image.dim(1), w = image.dim(2);
  auto plot = [&](std::int64_t x, std::int64_t y, const std::array<double, 3>& c) {
    if (x < 0 || y < 0 || x >= w || y >= h) return;
    for (int k = 0; k < 3; ++k) out.at(k, y, x) = c[k];
  };
  for (const auto& d : dets) {
    const auto& c = palette[static_cast<std::size_t>(d.class_id) % palette.size()];
    const auto x1 = std::lround(d.box.x1()), x2 = std::lround(d.box.x2()) - 1;
    const auto y1 = std::lround(d.box.y1()), y2 = std::lround(d.box.y2()) - 1;
    for (auto x = x1; x <= x2; ++x) {
      plot(x, y1, c);
      plot(x, y2, c);
    }
    for (auto y = y1; y <= y2; ++y) {
      plot(x1, y, c);
      plot(x2, y, c);
    }
  }
  return out;
}

std::vector<GroundTruth> parse_annotations(const std::string& text, Modality modality,
                                           const std::vector<std::string>& vocabulary, const std::string& source) {
  std::vector<GroundTruth> out;
  std::istringstream in(text);
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    const std::string where = source + ":" + std::to_string(number);
    const std::string body = trim(line.substr(0, line.find('#')));
    if (body.empty()) continue;
    std::istringstream fields(body);
    std::vector<std::string> tok;
    for (std::string t; fields >> t;) tok.push_back(t);
    if (tok.size() != 10) {
      throw ParseError(where + ": expected 'x1 y1 x2 y2 x3 y3 x4 y4 class difficulty', got " +
                       std::to_string(tok.size()) + " fields");
    }
    Polygon poly{};
    for (int k = 0; k < 8; ++k) poly[k] = parse_double(tok[k], where);
    const auto it = std::find(vocabulary.begin(), vocabulary.end(), tok[8]);
    if (it == vocabulary.end()) throw VocabularyError(where + ": unknown class '" + tok[8] + "'");
    parse_double(tok[9], where);
    GroundTruth g;
    g.polygon = poly;
    g.box = envelope(poly);
    g.class_id = static_cast<int>(it - vocabulary.begin());
    g.modality = modality;
    out.push_back(g);
  }
  return out;
}

std::string format_annotations(const std::vector<GroundTruth>& gts, const std::vector<std::string>& vocabulary) {
  std::string out;
  for (const auto& g : gts) {
    if (g.class_id < 0 || g.class_id >= static_cast<int>(vocabulary.size())) {
      throw VocabularyError("class id " + std::to_string(g.class_id) + " has no name");
    }
    const Polygon p = g.polygon ? *g.polygon : corners(g.box);
    for (double v : p) out += format_double(v) + " ";
    out += vocabulary[static_cast<std::size_t>(g.class_id)] + " 0\n";
  }
  return out;
}

std::vector<GroundTruth> read_annotations(const fs::path& path, Modality modality,
                                          const std::vector<std::string>& vocabulary) {
  return parse_annotations(read_file(path), modality, vocabulary, path.string());
}

void write_annotations(const fs::path& path, const std::vector<GroundTruth>& gts,
                       const std::vector<std::string>& vocabulary) {
  write_file(path, format_annotations(gts, vocabulary));
}

void write_dataset(const fs::path& dir, const std::vector<SamplePair>& samples) {
  fs::create_directories(dir);
  std::string index;
  for (const auto& s : samples) {
    save_png(dir / (s.id + "_rgb.png"), s.rgb);
    save_png(dir / (s.id + "_tir.png"), s.tir);
    write_annotations(dir / (s.id + "_rgb.txt"), s.rgb_gts, default_class_names());
    write_annotations(dir / (s.id + "_tir.txt"), s.tir_gts, default_class_names());
    index += s.id + "\n";
  }
  write_file(dir / "index.txt", index);
}

std::vector<SamplePair> read_dataset(const fs::path& dir, const std::vector<std::string>& vocabulary) {
  std::vector<SamplePair> out;
  std::istringstream in(read_file(dir / "index.txt"));
  for (std::string id; std::getline(in, id);) {
    id = trim(id);
    if (id.empty()) continue;
    SamplePair s;
    s.id = id;
    s.rgb = load_png(dir / (id + "_rgb.png"));
    s.tir = load_png(dir / (id + "_tir.png"));
    if (s.rgb.shape() != s.tir.shape()) throw ParseError(id + ": modal images differ in size");
    s.rgb_gts = read_annotations(dir / (id + "_rgb.txt"), Modality::RGB, vocabulary);
    s.tir_gts = read_annotations(dir / (id + "_tir.txt"), Modality::TIR, vocabulary);
    out.push_back(std::move(s));
  }
  if (out.empty()) throw ParseError((dir / "index.txt").string() + ": no samples listed");
  return out;
}

std::string serialize_checkpoint(const Detector& model) {
  // The parameter visitor is non-const; walk a copy.
  Detector net = model;
  std::string out(kMagic, 4);
  put<std::uint32_t>(out, kCheckpointVersion);
  const std::string cfg = detector_config_text(net.config);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(cfg.size()));
  out += cfg;
  std::vector<std::pair<std::string, Tensor*>> entries;
  net.for_each_param("", [&](const std::string& name, Tensor& t) { entries.emplace_back(name, &t); });
  put<std::uint32_t>(out, static_cast<std::uint32_t>(entries.size()));
  for (const auto& [name, t] : entries) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out += name;
    put<std::uint8_t>(out, kDtypeF64);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(t->rank()));
    for (auto d : t->shape()) put<std::uint64_t>(out, static_cast<std::uint64_t>(d));
    for (double v : t->values()) put<double>(out, v);
  }
  return out;
}

Detector deserialize_checkpoint(const std::string& bytes) {
  Reader r(bytes);
  if (r.text(4) != std::string(kMagic, 4)) throw VersionError("checkpoint: bad magic");
  const auto version = r.get<std::uint32_t>();
  if (version != kCheckpointVersion) {
    throw VersionError("checkpoint: version " + std::to_string(version) + ", expected " +
                       std::to_string(kCheckpointVersion));
  }
  const auto cfg_len = r.get<std::uint32_t>();
  DetectorConfig config;
  try {
    config = detector_config_from(KeyValueConfig::parse(r.text(cfg_len), "checkpoint"));
  } catch (const ConfigError& e) {
    throw VersionError(std::string("checkpoint: ") + e.what());
  }
  Detector net = Detector::zeros(config);
  std::vector<std::pair<std::string, Tensor*>> entries;
  net.for_each_param("", [&](const std::string& name, Tensor& t) { entries.emplace_back(name, &t); });
  const auto count = r.get<std::uint32_t>();
  if (count != entries.size()) {
    throw VersionError("checkpoint: " + std::to_string(count) + " tensors, model expects " + std::to_string(entries.size()));
  }
  for (auto& [name, t] : entries) {
    const std::string stored = r.text(r.get<std::uint32_t>());
    if (stored != name) throw VersionError("checkpoint: tensor '" + stored + "' where '" + name + "' was expected");
    if (r.get<std::uint8_t>() != kDtypeF64) throw VersionError("checkpoint: unsupported dtype for " + name);
    const auto rank = r.get<std::uint32_t>();
    Shape shape;
    for (std::uint32_t i = 0; i < rank; ++i) shape.push_back(static_cast<std::int64_t>(r.get<std::uint64_t>()));
    if (shape != t->shape()) {
      throw VersionError("checkpoint: " + name + " has shape " + shape_to_string(shape) + ", model expects " +
                         shape_to_string(t->shape()));
    }
    for (double& v : t->storage()) v = r.get<double>();
  }
  if (!r.done()) throw VersionError("checkpoint: trailing bytes");
  return net;
}

void write_checkpoint(const fs::path& path, const Detector& net) { write_file(path, serialize_checkpoint(net)); }

Detector read_checkpoint(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw VersionError("cannot open checkpoint " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return deserialize_checkpoint(ss.str());
}

KeyValueConfig KeyValueConfig::parse(const std::string& text, const std::string& source) {
  KeyValueConfig cfg;
  std::istringstream in(text);
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    const std::string body = trim(line.substr(0, line.find('#')));
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(source + ":" + std::to_string(number) + ": expected 'key = value'");
    }
    const std::string key = trim(body.substr(0, eq));
    if (key.empty()) throw ConfigError(source + ":" + std::to_string(number) + ": empty key");
    cfg.values_[key] = trim(body.substr(eq + 1));
  }
  return cfg;
}

KeyValueConfig KeyValueConfig::load(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse(ss.str(), path.string());
}

std::string KeyValueConfig::get(const std::string& key, const std::string& fallback) const {
  const auto it = values_.find(key);
  return it == values_.end() ? fallback : it->second;
}

double KeyValueConfig::get_double(const std::string& key, double fallback) const {
  const auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  try {
    return parse_double(it->second, key);
  } catch (const ParseError&) {
    throw ConfigError("config key '" + key + "': expected a number, got '" + it->second + "'");
  }
}

std::int64_t KeyValueConfig::get_int(const std::string& key, std::int64_t fallback) const {
  const auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  std::size_t used = 0;
  std::int64_t v = 0;
  try {
    v = std::stoll(it->second, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != it->second.size()) {
    throw ConfigError("config key '" + key + "': expected an integer, got '" + it->second + "'");
  }
  return v;
}

bool KeyValueConfig::get_bool(const std::string& key, bool fallback) const {
  const auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  if (it->second == "true" || it->second == "1") return true;
  if (it->second == "false" || it->second == "0") return false;
  throw ConfigError("config key '" + key + "': expected true/false, got '" + it->second + "'");
}

std::string KeyValueConfig::to_string() const {
  std::string out;
  for (const auto& [k, v] : values_) out += k + " = " + v + "\n";
  return out;
}

std::string detector_config_text(const DetectorConfig& c) {
  KeyValueConfig kv;
  kv.set("num_classes", std::to_string(c.num_classes));
  kv.set("width", format_double(c.width));
  kv.set("fusion", std::string(fusion_name(c.fusion)));
  kv.set("modality", std::string(modality_name(c.single_modality)));
  kv.set("state_size", std::to_string(c.state_size));
  kv.set("cfm_expand", std::to_string(c.cfm_expand));
  return kv.to_string();
}

DetectorConfig detector_config_from(const KeyValueConfig& kv) {
  DetectorConfig c;
  c.num_classes = static_cast<int>(kv.get_int("num_classes", c.num_classes));
  c.width = kv.get_double("width", c.width);
  try {
    c.fusion = parse_fusion(kv.get("fusion", std::string(fusion_name(c.fusion))));
  } catch (const ValidationError& e) {
    throw ConfigError(e.what());
  }
  const std::string m = kv.get("modality", std::string(modality_name(c.single_modality)));
  if (m == "rgb") c.single_modality = Modality::RGB;
  else if (m == "tir") c.single_modality = Modality::TIR;
  else throw ConfigError("modality must be rgb or tir, got '" + m + "'");
  c.state_size = kv.get_int("state_size", c.state_size);
  c.cfm_expand = kv.get_int("cfm_expand", c.cfm_expand);
  try {
    c.validate();
  } catch (const ValidationError& e) {
    throw ConfigError(e.what());
  }
  return c;
}

}  // namespace remotedet
