#include "unmix/scene_io.hpp"

#include <charconv>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>
#include <system_error>
#include <vector>

namespace unmix {

namespace {

std::ifstream open_input(const std::filesystem::path& path, std::ios::openmode mode) {
    std::ifstream in(path, mode);
    if (!in) throw IoError("cannot open " + path.string() + " for reading");
    return in;
}

std::ofstream open_output(const std::filesystem::path& path, std::ios::openmode mode) {
    std::ofstream out(path, mode);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    return out;
}

std::vector<std::string> split(const std::string& line, char sep) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        const std::size_t pos = line.find(sep, start);
        if (pos == std::string::npos) {
            out.push_back(line.substr(start));
            break;
        }
        out.push_back(line.substr(start, pos - start));
        start = pos + 1;
    }
    return out;
}

std::string trim(const std::string& s) {
    const auto begin = s.find_first_not_of(" \t\r\n");
    if (begin == std::string::npos) return "";
    const auto end = s.find_last_not_of(" \t\r\n");
    return s.substr(begin, end - begin + 1);
}

void write_le_float(std::ofstream& out, float v) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, sizeof bits);
    const char bytes[4] = {
        static_cast<char>(bits & 0xFF), static_cast<char>((bits >> 8) & 0xFF),
        static_cast<char>((bits >> 16) & 0xFF), static_cast<char>((bits >> 24) & 0xFF)};
    out.write(bytes, 4);
}

float read_le_float(const unsigned char* p) {
    const std::uint32_t bits = static_cast<std::uint32_t>(p[0]) |
                               (static_cast<std::uint32_t>(p[1]) << 8) |
                               (static_cast<std::uint32_t>(p[2]) << 16) |
                               (static_cast<std::uint32_t>(p[3]) << 24);
    float v;
    std::memcpy(&v, &bits, sizeof v);
    return v;
}

}  // namespace

std::string format_double(double value) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, value);
    return std::string(buf, res.ptr);
}

double parse_double(std::string_view text, const std::string& context) {
    double value = 0.0;
    const char* first = text.data();
    const char* last = text.data() + text.size();
    while (first != last && (*first == ' ' || *first == '\t')) ++first;
    const auto res = std::from_chars(first, last, value);
    if (res.ec != std::errc{}) {
        throw FormatError(context + ": cannot parse number from '" + std::string(text) + "'");
    }
    for (const char* p = res.ptr; p != last; ++p) {
        if (*p != ' ' && *p != '\t' && *p != '\r') {
            throw FormatError(context + ": trailing junk in '" + std::string(text) + "'");
        }
    }
    return value;
}

EndmemberMatrix load_endmembers(const std::filesystem::path& path) {
    auto in = open_input(path, std::ios::in);
    std::vector<std::vector<double>> rows;
    std::string line;
    std::size_t line_no = 0;
    std::size_t width = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        const auto fields = split(line, ',');
        if (width == 0) {
            width = fields.size();
        } else if (fields.size() != width) {
            throw FormatError(path.string() + ": row " + std::to_string(line_no) + " has " +
                              std::to_string(fields.size()) + " fields, expected " +
                              std::to_string(width));
        }
        std::vector<double> row;
        row.reserve(fields.size());
        for (const auto& f : fields) {
            const double v =
                parse_double(f, path.string() + " row " + std::to_string(line_no));
            if (!std::isfinite(v)) {
                throw ValidationError(path.string() + ": non-finite entry at row " +
                                      std::to_string(line_no));
            }
            if (v < 0.0) {
                throw ValidationError(path.string() + ": negative reflectance at row " +
                                      std::to_string(line_no));
            }
            row.push_back(v);
        }
        rows.push_back(std::move(row));
    }
    if (rows.empty()) throw FormatError(path.string() + ": empty endmember file");
    Matrix m(rows.size(), width);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        for (std::size_t j = 0; j < width; ++j) m(i, j) = rows[i][j];
    }
    return EndmemberMatrix(std::move(m));
}

void save_endmembers(const EndmemberMatrix& m, const std::filesystem::path& path) {
    auto out = open_output(path, std::ios::out);
    for (int i = 0; i < m.bands(); ++i) {
        for (int j = 0; j < m.count(); ++j) {
            if (j) out << ',';
            out << format_double(m.entries(i, j));
        }
        out << '\n';
    }
    if (!out) throw IoError("write failed for " + path.string());
}

std::filesystem::path raw_path_for(const std::filesystem::path& header_path) {
    auto raw = header_path;
    raw.replace_extension(".raw");
    return raw;
}

SceneImage load_image(const std::filesystem::path& header_path) {
    auto in = open_input(header_path, std::ios::in);
    std::map<std::string, std::string> keys;
    std::string line;
    while (std::getline(in, line)) {
        line = trim(line);
        if (line.empty()) continue;
        const auto pos = line.find(':');
        if (pos == std::string::npos) {
            throw FormatError(header_path.string() + ": header line without ':' — " + line);
        }
        keys[trim(line.substr(0, pos))] = trim(line.substr(pos + 1));
    }
    for (const char* required : {"samples", "bands", "data_type", "byte_order", "interleave"}) {
        if (!keys.count(required)) {
            throw FormatError(header_path.string() + ": missing header key '" +
                              std::string(required) + "'");
        }
    }
    if (keys["data_type"] != "float32") {
        throw FormatError(header_path.string() + ": unsupported data_type '" +
                          keys["data_type"] + "' (only float32)");
    }
    if (keys["byte_order"] != "little") {
        throw FormatError(header_path.string() + ": unsupported byte_order '" +
                          keys["byte_order"] + "' (only little)");
    }
    if (keys["interleave"] != "bsq") {
        throw FormatError(header_path.string() + ": unsupported interleave '" +
                          keys["interleave"] + "' (only bsq)");
    }
    const long samples = std::lround(parse_double(keys["samples"], "samples"));
    const long bands = std::lround(parse_double(keys["bands"], "bands"));
    if (samples <= 0 || bands <= 0) {
        throw FormatError(header_path.string() + ": samples and bands must be positive");
    }

    const auto raw_path = raw_path_for(header_path);
    auto raw = open_input(raw_path, std::ios::in | std::ios::binary);
    raw.seekg(0, std::ios::end);
    const std::uint64_t actual = static_cast<std::uint64_t>(raw.tellg());
    const std::uint64_t expected =
        static_cast<std::uint64_t>(samples) * static_cast<std::uint64_t>(bands) * 4u;
    if (actual != expected) {
        throw FormatError(raw_path.string() + ": raw size " + std::to_string(actual) +
                          " bytes, expected " + std::to_string(expected));
    }
    raw.seekg(0, std::ios::beg);
    std::vector<unsigned char> buffer(expected);
    raw.read(reinterpret_cast<char*>(buffer.data()), static_cast<std::streamsize>(expected));
    if (!raw) throw IoError("read failed for " + raw_path.string());

    SceneImage image;
    image.pixels.resize(samples, bands);
    // band-sequential: all samples of band 0, then band 1, ...
    std::size_t offset = 0;
    for (long b = 0; b < bands; ++b) {
        for (long n = 0; n < samples; ++n) {
            image.pixels(n, b) = static_cast<double>(read_le_float(buffer.data() + offset));
            offset += 4;
        }
    }
    return image;
}

void save_image(const SceneImage& image, const std::filesystem::path& header_path) {
    auto header = open_output(header_path, std::ios::out);
    header << "samples: " << image.size() << '\n'
           << "bands: " << image.bands() << '\n'
           << "data_type: float32\n"
           << "byte_order: little\n"
           << "interleave: bsq\n";
    if (!header) throw IoError("write failed for " + header_path.string());

    auto raw = open_output(raw_path_for(header_path), std::ios::out | std::ios::binary);
    for (int b = 0; b < image.bands(); ++b) {
        for (int n = 0; n < image.size(); ++n) {
            write_le_float(raw, static_cast<float>(image.pixels(n, b)));
        }
    }
    if (!raw) throw IoError("write failed for " + raw_path_for(header_path).string());
}

namespace {

Matrix keep_rows(const Matrix& m, int factor) {
    const Eigen::Index kept = (m.rows() + factor - 1) / factor;
    Matrix out(kept, m.cols());
    for (Eigen::Index i = 0; i < kept; ++i) out.row(i) = m.row(i * factor);
    return out;
}

}  // namespace

EndmemberMatrix decimate_bands(const EndmemberMatrix& m, int factor) {
    if (factor <= 0) throw std::invalid_argument("decimation factor must be positive");
    if (factor == 1) return m;
    return EndmemberMatrix(keep_rows(m.entries, factor));
}

SceneImage decimate_bands(const SceneImage& image, int factor) {
    if (factor <= 0) throw std::invalid_argument("decimation factor must be positive");
    if (factor == 1) return image;
    SceneImage out;
    out.pixels = keep_rows(image.pixels.transpose(), factor).transpose();
    out.truth = image.truth;
    if (out.truth && out.truth->endmembers) {
        out.truth->endmembers = keep_rows(*out.truth->endmembers, factor);
    }
    return out;
}

void save_detection_map(const DetectionMap& map, int width, int height,
                        const std::filesystem::path& path) {
    const std::size_t n = map.labels.size();
    if (width <= 0 || height <= 0 ||
        static_cast<std::size_t>(width) * static_cast<std::size_t>(height) != n) {
        throw std::invalid_argument("detection map of length " + std::to_string(n) +
                                    " does not fit " + std::to_string(width) + "x" +
                                    std::to_string(height));
    }
    auto out = open_output(path, std::ios::out | std::ios::binary);
    out << "P5\n" << width << ' ' << height << "\n255\n";
    for (PixelLabel label : map.labels) {
        char byte = 0;
        switch (label) {
            case PixelLabel::Linear: byte = static_cast<char>(255); break;
            case PixelLabel::Nonlinear: byte = 0; break;
            case PixelLabel::Unclassified: byte = static_cast<char>(128); break;
        }
        out.put(byte);
    }
    if (!out) throw IoError("write failed for " + path.string());
}

void save_ground_truth(const GroundTruth& truth, const std::filesystem::path& path) {
    auto out = open_output(path, std::ios::out);
    const auto n = truth.labels.size();
    const auto r = static_cast<std::size_t>(truth.abundances.cols());
    out << "pixel_index,label,eta_d";
    for (std::size_t j = 0; j < r; ++j) out << ",alpha_" << (j + 1);
    out << '\n';
    for (std::size_t i = 0; i < n; ++i) {
        out << i << ',' << to_string(truth.labels[i]) << ','
            << format_double(truth.eta_d(static_cast<Eigen::Index>(i)));
        for (std::size_t j = 0; j < r; ++j) {
            out << ',' << format_double(truth.abundances(static_cast<Eigen::Index>(i),
                                                         static_cast<Eigen::Index>(j)));
        }
        out << '\n';
    }
    if (!out) throw IoError("write failed for " + path.string());
}

GroundTruth load_ground_truth(const std::filesystem::path& path) {
    auto in = open_input(path, std::ios::in);
    std::string line;
    if (!std::getline(in, line)) throw FormatError(path.string() + ": empty ground truth");
    const auto header = split(trim(line), ',');
    if (header.size() < 4 || header[0] != "pixel_index") {
        throw FormatError(path.string() + ": unexpected ground-truth header");
    }
    const std::size_t r = header.size() - 3;
    std::vector<PixelLabel> labels;
    std::vector<double> etas;
    std::vector<double> alphas;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        const auto fields = split(trim(line), ',');
        if (fields.size() != header.size()) {
            throw FormatError(path.string() + ": row " + std::to_string(line_no) +
                              " has wrong field count");
        }
        labels.push_back(parse_pixel_label(fields[1]));
        etas.push_back(parse_double(fields[2], "eta_d"));
        for (std::size_t j = 0; j < r; ++j) {
            alphas.push_back(parse_double(fields[3 + j], "alpha"));
        }
    }
    GroundTruth truth;
    truth.labels = std::move(labels);
    const auto n = truth.labels.size();
    truth.eta_d = Eigen::Map<const Vector>(etas.data(), static_cast<Eigen::Index>(n));
    truth.abundances = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic,
                                                      Eigen::RowMajor>>(
        alphas.data(), static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(r));
    return truth;
}

}  // namespace unmix
