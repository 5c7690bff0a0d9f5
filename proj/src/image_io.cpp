#include "druformer/image_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace druformer {

namespace {
uint8_t quantize(double v) {
    const double c = std::clamp(v, 0.0, 1.0);
    return static_cast<uint8_t>(std::lround(c * 255.0));
}
}  // namespace

void write_ppm(const std::string& path, const Tensor& image) {
    if (image.ndim() != 3 || image.dim(0) != 3) {
        throw std::invalid_argument("write_ppm: image must be [3 x H x W]");
    }
    const int H = image.dim(1), W = image.dim(2);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("write_ppm: cannot open " + path);
    out << "P6\n" << W << " " << H << "\n255\n";
    const size_t plane = static_cast<size_t>(H) * W;
    std::vector<uint8_t> buf(plane * 3);
    for (size_t i = 0; i < plane; ++i) {
        buf[i * 3 + 0] = quantize(image.data()[i]);
        buf[i * 3 + 1] = quantize(image.data()[plane + i]);
        buf[i * 3 + 2] = quantize(image.data()[2 * plane + i]);
    }
    out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (!out) throw std::runtime_error("write_ppm: write failed for " + path);
}

namespace {
// Reads one whitespace-delimited token, skipping '#' comments.
std::string next_token(std::istream& in) {
    std::string tok;
    while (in >> tok) {
        if (tok[0] == '#') {
            std::string rest;
            std::getline(in, rest);
            continue;
        }
        return tok;
    }
    throw std::runtime_error("pnm: unexpected end of header");
}
}  // namespace

std::vector<uint8_t> read_ppm_raw(const std::string& path, int* h, int* w) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("read_ppm: cannot open " + path);
    if (next_token(in) != "P6") throw std::runtime_error("read_ppm: not a P6 file: " + path);
    const int W = std::stoi(next_token(in));
    const int H = std::stoi(next_token(in));
    const int maxval = std::stoi(next_token(in));
    if (maxval != 255) throw std::runtime_error("read_ppm: only maxval 255 supported");
    in.get();  // single whitespace after header
    std::vector<uint8_t> buf(static_cast<size_t>(H) * W * 3);
    in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (!in) throw std::runtime_error("read_ppm: truncated pixel data in " + path);
    if (h) *h = H;
    if (w) *w = W;
    return buf;
}

Tensor ppm_raw_to_tensor(const std::vector<uint8_t>& rgb, int h, int w) {
    const size_t plane = static_cast<size_t>(h) * w;
    Tensor image = Tensor::zeros({3, h, w});
    for (size_t i = 0; i < plane; ++i) {
        image.data()[i] = rgb[i * 3 + 0] / 255.0;
        image.data()[plane + i] = rgb[i * 3 + 1] / 255.0;
        image.data()[2 * plane + i] = rgb[i * 3 + 2] / 255.0;
    }
    return image;
}

Tensor read_ppm(const std::string& path) {
    int h = 0, w = 0;
    const std::vector<uint8_t> buf = read_ppm_raw(path, &h, &w);
    return ppm_raw_to_tensor(buf, h, w);
}

void write_pgm_scaled(const std::string& path, const std::vector<double>& values, int rows,
                      int cols) {
    if (values.size() != static_cast<size_t>(rows) * cols) {
        throw std::invalid_argument("write_pgm_scaled: size mismatch");
    }
    double lo = values[0], hi = values[0];
    for (double v : values) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    const double span = hi - lo;
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("write_pgm_scaled: cannot open " + path);
    out << "P5\n" << cols << " " << rows << "\n255\n";
    std::vector<uint8_t> buf(values.size());
    for (size_t i = 0; i < values.size(); ++i) {
        buf[i] = span > 0.0 ? static_cast<uint8_t>(std::lround((values[i] - lo) / span * 255.0))
                            : 0;
    }
    out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (!out) throw std::runtime_error("write_pgm_scaled: write failed for " + path);
}

std::vector<uint8_t> read_pgm(const std::string& path, int* rows, int* cols) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("read_pgm: cannot open " + path);
    if (next_token(in) != "P5") throw std::runtime_error("read_pgm: not a P5 file: " + path);
    const int W = std::stoi(next_token(in));
    const int H = std::stoi(next_token(in));
    const int maxval = std::stoi(next_token(in));
    if (maxval != 255) throw std::runtime_error("read_pgm: only maxval 255 supported");
    in.get();
    std::vector<uint8_t> buf(static_cast<size_t>(H) * W);
    in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (!in) throw std::runtime_error("read_pgm: truncated pixel data in " + path);
    if (rows) *rows = H;
    if (cols) *cols = W;
    return buf;
}

void write_csv_matrix(const std::string& path, const std::vector<double>& values, int rows,
                      int cols, const std::string& comment) {
    if (values.size() != static_cast<size_t>(rows) * cols) {
        throw std::invalid_argument("write_csv_matrix: size mismatch");
    }
    std::ofstream out(path);
    if (!out) throw std::runtime_error("write_csv_matrix: cannot open " + path);
    if (!comment.empty()) out << "# " << comment << "\n";
    char cell[32];
    for (int i = 0; i < rows; ++i) {
        for (int j = 0; j < cols; ++j) {
            std::snprintf(cell, sizeof(cell), "%.6f", values[static_cast<size_t>(i) * cols + j]);
            out << cell << (j + 1 < cols ? "," : "\n");
        }
    }
    if (!out) throw std::runtime_error("write_csv_matrix: write failed for " + path);
}

std::vector<double> read_csv_matrix(const std::string& path, int* rows, int* cols) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("read_csv_matrix: cannot open " + path);
    std::vector<double> values;
    int r = 0, c = -1;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        std::stringstream ss(line);
        std::string cell;
        int this_c = 0;
        while (std::getline(ss, cell, ',')) {
            values.push_back(std::stod(cell));
            ++this_c;
        }
        if (c == -1) c = this_c;
        else if (c != this_c) throw std::runtime_error("read_csv_matrix: ragged rows in " + path);
        ++r;
    }
    if (rows) *rows = r;
    if (cols) *cols = c;
    return values;
}

}  // namespace druformer
