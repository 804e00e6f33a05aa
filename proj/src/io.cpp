#include "icdepth/io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace icdepth {

namespace {

std::ifstream open_in(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open for reading: " + path);
  return in;
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for writing: " + path);
  return out;
}

// Reads the next header token of a PNM file, skipping whitespace and
// '#' comments.
std::string pnm_token(std::istream& in) {
  std::string tok;
  int c;
  while ((c = in.get()) != EOF) {
    if (c == '#') {
      while ((c = in.get()) != EOF && c != '\n') {
      }
      continue;
    }
    if (std::isspace(c)) {
      if (!tok.empty()) break;
      continue;
    }
    tok.push_back(static_cast<char>(c));
  }
  if (tok.empty()) throw IoError("truncated PNM header");
  return tok;
}

int pnm_int(std::istream& in) {
  const std::string tok = pnm_token(in);
  try {
    size_t used = 0;
    const int v = std::stoi(tok, &used);
    if (used != tok.size()) throw std::invalid_argument(tok);
    return v;
  } catch (const std::exception&) {
    throw IoError("malformed PNM header token: " + tok);
  }
}

void check_dims(int h, int w) {
  if (h <= 0 || w <= 0 || static_cast<long long>(h) * w > (1LL << 28)) {
    throw IoError("unreasonable raster dimensions");
  }
}

}  // namespace

RgbImage read_ppm(const std::string& path) {
  std::ifstream in = open_in(path);
  if (pnm_token(in) != "P6") throw IoError("not a P6 PPM: " + path);
  const int w = pnm_int(in);
  const int h = pnm_int(in);
  const int maxval = pnm_int(in);
  check_dims(h, w);
  if (maxval != 255) throw IoError("only maxval 255 PPM supported: " + path);

  std::vector<unsigned char> raw(static_cast<size_t>(h) * w * 3);
  in.read(reinterpret_cast<char*>(raw.data()), raw.size());
  if (in.gcount() != static_cast<std::streamsize>(raw.size())) {
    throw IoError("truncated PPM payload: " + path);
  }
  RgbImage img(h, w);
  for (size_t i = 0; i < raw.size(); ++i) {
    img.pixels[i] = raw[i] / 255.0;
  }
  return img;
}

void write_ppm(const std::string& path, const RgbImage& img) {
  std::ofstream out = open_out(path);
  out << "P6\n" << img.width << " " << img.height << "\n255\n";
  std::vector<unsigned char> raw(img.pixels.size());
  for (size_t i = 0; i < raw.size(); ++i) {
    const double v = std::clamp(img.pixels[i], 0.0, 1.0);
    raw[i] = static_cast<unsigned char>(std::lround(v * 255.0));
  }
  out.write(reinterpret_cast<const char*>(raw.data()), raw.size());
  if (!out) throw IoError("failed writing PPM: " + path);
}

namespace {

std::vector<std::uint16_t> read_pgm16(const std::string& path, int& h, int& w,
                                      int& maxval) {
  std::ifstream in = open_in(path);
  if (pnm_token(in) != "P5") throw IoError("not a P5 PGM: " + path);
  w = pnm_int(in);
  h = pnm_int(in);
  maxval = pnm_int(in);
  check_dims(h, w);
  std::vector<std::uint16_t> samples(static_cast<size_t>(h) * w);
  if (maxval < 256) {
    std::vector<unsigned char> raw(samples.size());
    in.read(reinterpret_cast<char*>(raw.data()), raw.size());
    if (in.gcount() != static_cast<std::streamsize>(raw.size())) {
      throw IoError("truncated PGM payload: " + path);
    }
    for (size_t i = 0; i < raw.size(); ++i) samples[i] = raw[i];
  } else {
    std::vector<unsigned char> raw(samples.size() * 2);
    in.read(reinterpret_cast<char*>(raw.data()), raw.size());
    if (in.gcount() != static_cast<std::streamsize>(raw.size())) {
      throw IoError("truncated PGM payload: " + path);
    }
    for (size_t i = 0; i < samples.size(); ++i) {
      samples[i] = static_cast<std::uint16_t>((raw[2 * i] << 8) | raw[2 * i + 1]);
    }
  }
  return samples;
}

void write_pgm16(const std::string& path, int h, int w,
                 const std::vector<std::uint16_t>& samples) {
  std::ofstream out = open_out(path);
  out << "P5\n" << w << " " << h << "\n65535\n";
  std::vector<unsigned char> raw(samples.size() * 2);
  for (size_t i = 0; i < samples.size(); ++i) {
    raw[2 * i] = static_cast<unsigned char>(samples[i] >> 8);
    raw[2 * i + 1] = static_cast<unsigned char>(samples[i] & 0xff);
  }
  out.write(reinterpret_cast<const char*>(raw.data()), raw.size());
  if (!out) throw IoError("failed writing PGM: " + path);
}

}  // namespace

SegmentMap read_segment_map_pgm(const std::string& path) {
  int h, w, maxval;
  const std::vector<std::uint16_t> samples = read_pgm16(path, h, w, maxval);
  SegmentMap seg(h, w);
  int max_label = 0;
  for (size_t i = 0; i < samples.size(); ++i) {
    seg.labels[i] = samples[i];
    max_label = std::max(max_label, static_cast<int>(samples[i]));
  }
  seg.segment_count = max_label + 1;
  return seg;
}

void write_segment_map_pgm(const std::string& path, const SegmentMap& seg) {
  std::vector<std::uint16_t> samples(seg.labels.size());
  for (size_t i = 0; i < samples.size(); ++i) {
    if (seg.labels[i] < 0 || seg.labels[i] > 65535) {
      throw IoError("segment id out of 16-bit range");
    }
    samples[i] = static_cast<std::uint16_t>(seg.labels[i]);
  }
  write_pgm16(path, seg.height, seg.width, samples);
}

EdgeMap read_edge_map_pgm(const std::string& path) {
  int h, w, maxval;
  const std::vector<std::uint16_t> samples = read_pgm16(path, h, w, maxval);
  EdgeMap edges(h, w);
  for (size_t i = 0; i < samples.size(); ++i) {
    edges.edges[i] = samples[i] != 0;
  }
  return edges;
}

void write_edge_map_pgm(const std::string& path, const EdgeMap& edges) {
  std::ofstream out = open_out(path);
  out << "P5\n" << edges.width << " " << edges.height << "\n255\n";
  std::vector<unsigned char> raw(edges.edges.size());
  for (size_t i = 0; i < raw.size(); ++i) raw[i] = edges.edges[i] ? 255 : 0;
  out.write(reinterpret_cast<const char*>(raw.data()), raw.size());
  if (!out) throw IoError("failed writing PGM: " + path);
}

std::vector<PixelMask> read_plane_masks_pgm(const std::string& path) {
  int h, w, maxval;
  const std::vector<std::uint16_t> samples = read_pgm16(path, h, w, maxval);
  std::set<std::uint16_t> ids(samples.begin(), samples.end());
  ids.erase(0);
  std::vector<PixelMask> masks;
  for (std::uint16_t id : ids) {
    PixelMask mask(samples.size(), 0);
    for (size_t i = 0; i < samples.size(); ++i) mask[i] = samples[i] == id;
    masks.push_back(std::move(mask));
  }
  return masks;
}

void write_preview_pgm(const std::string& path, const Tensor& raster,
                       double& min_out, double& max_out) {
  if (raster.channels != 1) throw IoError("preview: raster must be 1xHxW");
  min_out = raster.data[0];
  max_out = raster.data[0];
  for (double v : raster.data) {
    min_out = std::min(min_out, v);
    max_out = std::max(max_out, v);
  }
  const double range = max_out > min_out ? max_out - min_out : 1.0;
  std::ofstream out = open_out(path);
  out << "P5\n" << raster.width << " " << raster.height << "\n255\n";
  std::vector<unsigned char> raw(raster.data.size());
  for (size_t i = 0; i < raw.size(); ++i) {
    raw[i] = static_cast<unsigned char>(
        std::lround((raster.data[i] - min_out) / range * 255.0));
  }
  out.write(reinterpret_cast<const char*>(raw.data()), raw.size());
  if (!out) throw IoError("failed writing preview: " + path);
}

Tensor read_float_raster(const std::string& path) {
  std::ifstream in = open_in(path);
  char magic[4];
  in.read(magic, 4);
  if (in.gcount() != 4 || std::memcmp(magic, "FR1\n", 4) != 0) {
    throw IoError("not a FloatRaster (FR1) file: " + path);
  }
  std::string header;
  std::getline(in, header);
  std::istringstream hs(header);
  int h = 0, w = 0;
  if (!(hs >> h >> w)) throw IoError("malformed FR1 header: " + path);
  check_dims(h, w);
  std::vector<float> raw(static_cast<size_t>(h) * w);
  in.read(reinterpret_cast<char*>(raw.data()), raw.size() * sizeof(float));
  if (in.gcount() != static_cast<std::streamsize>(raw.size() * sizeof(float))) {
    throw IoError("truncated FR1 payload: " + path);
  }
  Tensor t(1, h, w);
  for (size_t i = 0; i < raw.size(); ++i) t.data[i] = raw[i];
  return t;
}

void write_float_raster(const std::string& path, const Tensor& raster) {
  if (raster.channels != 1) throw IoError("FR1: raster must be 1xHxW");
  std::ofstream out = open_out(path);
  out << "FR1\n" << raster.height << " " << raster.width << "\n";
  std::vector<float> raw(raster.data.size());
  for (size_t i = 0; i < raw.size(); ++i) {
    raw[i] = static_cast<float>(raster.data[i]);
  }
  out.write(reinterpret_cast<const char*>(raw.data()),
            raw.size() * sizeof(float));
  if (!out) throw IoError("failed writing FR1: " + path);
}

namespace {

template <typename T>
T parse_number(const std::string& key, const std::string& value);

template <>
double parse_number<double>(const std::string& key, const std::string& value) {
  size_t used = 0;
  const double v = std::stod(value, &used);
  if (used != value.size()) {
    throw std::invalid_argument("config: bad value for " + key + ": " + value);
  }
  return v;
}

template <>
int parse_number<int>(const std::string& key, const std::string& value) {
  size_t used = 0;
  const int v = std::stoi(value, &used);
  if (used != value.size()) {
    throw std::invalid_argument("config: bad value for " + key + ": " + value);
  }
  return v;
}

template <>
std::uint64_t parse_number<std::uint64_t>(const std::string& key,
                                          const std::string& value) {
  size_t used = 0;
  const unsigned long long v = std::stoull(value, &used);
  if (used != value.size()) {
    throw std::invalid_argument("config: bad value for " + key + ": " + value);
  }
  return v;
}

std::string trim(const std::string& s) {
  size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

}  // namespace

RunConfig parse_run_config_text(const std::string& text) {
  RunConfig cfg;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const size_t eq = line.find('=');
    if (eq == std::string::npos) {
      throw std::invalid_argument("config: line " + std::to_string(line_no) +
                                  " is not key = value");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key == "k") {
      cfg.k = parse_number<int>(key, value);
    } else if (key == "sigma") {
      cfg.sigma = parse_number<double>(key, value);
    } else if (key == "compactness") {
      cfg.compactness = parse_number<double>(key, value);
    } else if (key == "iterations") {
      cfg.iterations = parse_number<int>(key, value);
    } else if (key == "lr") {
      cfg.lr = parse_number<double>(key, value);
    } else if (key == "steps") {
      cfg.steps = parse_number<int>(key, value);
    } else if (key == "head") {
      if (value != "sc" && value != "sc_mask" && value != "ic") {
        throw std::invalid_argument("config: head must be sc, sc_mask or ic");
      }
      cfg.head = value;
    } else if (key == "seed") {
      cfg.seed = parse_number<std::uint64_t>(key, value);
    } else if (key == "canny_low") {
      cfg.canny_low = parse_number<double>(key, value);
    } else if (key == "canny_high") {
      cfg.canny_high = parse_number<double>(key, value);
    } else if (key == "dde_plane") {
      cfg.dde_plane = parse_number<double>(key, value);
    } else if (key == "fx") {
      cfg.fx = parse_number<double>(key, value);
    } else if (key == "fy") {
      cfg.fy = parse_number<double>(key, value);
    } else if (key == "cx") {
      cfg.cx = parse_number<double>(key, value);
    } else if (key == "cy") {
      cfg.cy = parse_number<double>(key, value);
    } else if (key == "size") {
      cfg.size = parse_number<int>(key, value);
    } else if (key == "shapes") {
      cfg.shapes = parse_number<int>(key, value);
    } else {
      throw std::invalid_argument("config: unknown key: " + key);
    }
  }
  return cfg;
}

RunConfig read_run_config(const std::string& path) {
  return parse_run_config_text(read_text_file(path));
}

void write_checkpoint(const std::string& path,
                      const std::vector<Tensor>& params) {
  std::ofstream out = open_out(path);
  out << "ICCKPT1\n";
  const std::uint32_t count = static_cast<std::uint32_t>(params.size());
  out.write(reinterpret_cast<const char*>(&count), sizeof(count));
  for (const Tensor& p : params) {
    const std::uint32_t dims[3] = {static_cast<std::uint32_t>(p.channels),
                                   static_cast<std::uint32_t>(p.height),
                                   static_cast<std::uint32_t>(p.width)};
    out.write(reinterpret_cast<const char*>(dims), sizeof(dims));
    out.write(reinterpret_cast<const char*>(p.data.data()),
              p.data.size() * sizeof(double));
  }
  if (!out) throw IoError("failed writing checkpoint: " + path);
}

std::vector<Tensor> read_checkpoint(const std::string& path) {
  std::ifstream in = open_in(path);
  std::string magic;
  std::getline(in, magic);
  if (magic != "ICCKPT1") throw IoError("not a checkpoint file: " + path);
  std::uint32_t count = 0;
  in.read(reinterpret_cast<char*>(&count), sizeof(count));
  if (!in || count > 4096) throw IoError("malformed checkpoint: " + path);
  std::vector<Tensor> params;
  params.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    std::uint32_t dims[3];
    in.read(reinterpret_cast<char*>(dims), sizeof(dims));
    if (!in) throw IoError("truncated checkpoint: " + path);
    check_dims(dims[1], dims[2]);
    Tensor t(static_cast<int>(dims[0]), static_cast<int>(dims[1]),
             static_cast<int>(dims[2]));
    in.read(reinterpret_cast<char*>(t.data.data()),
            t.data.size() * sizeof(double));
    if (!in) throw IoError("truncated checkpoint: " + path);
    params.push_back(std::move(t));
  }
  return params;
}

namespace {

std::string format_full(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

void write_loss_csv(const std::string& path,
                    const std::vector<LossBreakdown>& curve) {
  std::ofstream out = open_out(path);
  out << "step,l1,grad,normal,total\n";
  for (size_t i = 0; i < curve.size(); ++i) {
    out << i << "," << format_full(curve[i].l1) << ","
        << format_full(curve[i].grad) << "," << format_full(curve[i].normal)
        << "," << format_full(curve[i].total) << "\n";
  }
  if (!out) throw IoError("failed writing loss CSV: " + path);
}

void write_metrics_csv(const std::string& path, const MetricsReport& report) {
  std::ofstream out = open_out(path);
  const auto& names = MetricsReport::field_names();
  for (size_t i = 0; i < names.size(); ++i) {
    out << names[i] << (i + 1 < names.size() ? "," : "\n");
  }
  const auto fields = report.fields();
  for (size_t i = 0; i < fields.size(); ++i) {
    if (fields[i]) out << format_full(*fields[i]);
    out << (i + 1 < fields.size() ? "," : "\n");
  }
  if (!out) throw IoError("failed writing metrics CSV: " + path);
}

MetricsReport read_metrics_csv(const std::string& path) {
  std::ifstream in = open_in(path);
  std::string header, values;
  if (!std::getline(in, header) || !std::getline(in, values)) {
    throw IoError("malformed metrics CSV: " + path);
  }
  auto split = [](const std::string& s) {
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream ss(s);
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (!s.empty() && s.back() == ',') cells.push_back("");
    return cells;
  };
  const auto names = split(header);
  const auto cells = split(values);
  const auto& expected = MetricsReport::field_names();
  if (names != std::vector<std::string>(expected.begin(), expected.end()) ||
      cells.size() != expected.size()) {
    throw IoError("unexpected metrics CSV layout: " + path);
  }
  std::vector<std::optional<double>> fields(expected.size());
  for (size_t i = 0; i < cells.size(); ++i) {
    if (!cells[i].empty()) fields[i] = std::stod(cells[i]);
  }
  MetricsReport r;
  r.absrel = fields[0];
  r.rmse = fields[1];
  r.log10 = fields[2];
  r.delta1 = fields[3];
  r.delta2 = fields[4];
  r.delta3 = fields[5];
  r.dbe_acc = fields[6];
  r.dbe_comp = fields[7];
  r.dde0 = fields[8];
  r.dde_minus = fields[9];
  r.dde_plus = fields[10];
  r.pe_plan = fields[11];
  r.pe_orie = fields[12];
  return r;
}

std::string render_metrics_table(const MetricsReport& report) {
  const auto& names = MetricsReport::field_names();
  const auto fields = report.fields();
  std::ostringstream out;
  for (size_t i = 0; i < names.size(); ++i) {
    char value[64];
    if (fields[i]) {
      std::snprintf(value, sizeof(value), "%.4f", *fields[i]);
    } else {
      std::snprintf(value, sizeof(value), "—");
    }
    out << "  " << names[i];
    for (size_t pad = names[i].size(); pad < 10; ++pad) out << ' ';
    out << value << "\n";
  }
  return out.str();
}

void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out = open_out(path);
  out << content;
  if (!out) throw IoError("failed writing: " + path);
}

std::string read_text_file(const std::string& path) {
  std::ifstream in = open_in(path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace icdepth
