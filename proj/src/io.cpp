#include "panoptic/io.hpp"

#include <bit>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <optional>
#include <sstream>
#include <vector>

namespace panoptic::io {

namespace {

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    if (!in.good() && !in.eof()) throw IoError("read failure on " + path.string());
    return std::move(buf).str();
}

void write_file(const std::filesystem::path& path, const std::string& data) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    out.write(data.data(), static_cast<std::streamsize>(data.size()));
    if (!out.good()) throw IoError("write failure on " + path.string());
}

// --- little-endian scalar packing -------------------------------------------

template <class T>
void put_le(std::string& out, T value) {
    static_assert(std::is_trivially_copyable_v<T>);
    unsigned char bytes[sizeof(T)];
    std::memcpy(bytes, &value, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
    out.append(reinterpret_cast<const char*>(bytes), sizeof(T));
}

template <class T>
T get_le(const char* p) {
    unsigned char bytes[sizeof(T)];
    std::memcpy(bytes, p, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
    T value;
    std::memcpy(&value, bytes, sizeof(T));
    return value;
}

// --- PLY ---------------------------------------------------------------------

enum class PlyType { i8, u8, i16, u16, i32, u32, f32, f64 };

std::optional<PlyType> ply_type_of(std::string_view token) {
    if (token == "char" || token == "int8") return PlyType::i8;
    if (token == "uchar" || token == "uint8") return PlyType::u8;
    if (token == "short" || token == "int16") return PlyType::i16;
    if (token == "ushort" || token == "uint16") return PlyType::u16;
    if (token == "int" || token == "int32") return PlyType::i32;
    if (token == "uint" || token == "uint32") return PlyType::u32;
    if (token == "float" || token == "float32") return PlyType::f32;
    if (token == "double" || token == "float64") return PlyType::f64;
    return std::nullopt;
}

std::size_t ply_type_size(PlyType t) {
    switch (t) {
        case PlyType::i8:
        case PlyType::u8: return 1;
        case PlyType::i16:
        case PlyType::u16: return 2;
        case PlyType::i32:
        case PlyType::u32:
        case PlyType::f32: return 4;
        case PlyType::f64: return 8;
    }
    return 0;
}

double ply_read_scalar(const char* p, PlyType t) {
    switch (t) {
        case PlyType::i8: return static_cast<double>(get_le<std::int8_t>(p));
        case PlyType::u8: return static_cast<double>(get_le<std::uint8_t>(p));
        case PlyType::i16: return static_cast<double>(get_le<std::int16_t>(p));
        case PlyType::u16: return static_cast<double>(get_le<std::uint16_t>(p));
        case PlyType::i32: return static_cast<double>(get_le<std::int32_t>(p));
        case PlyType::u32: return static_cast<double>(get_le<std::uint32_t>(p));
        case PlyType::f32: return static_cast<double>(get_le<float>(p));
        case PlyType::f64: return get_le<double>(p);
    }
    return 0.0;
}

struct PlyProperty {
    std::string name;
    PlyType type = PlyType::f32;
    bool is_list = false;
    PlyType count_type = PlyType::u8;
};

// Saturating casts: adversarial files may carry any value in any column.
std::uint8_t sat_u8(double v) {
    if (!(v > 0.0)) return 0;
    if (v > 255.0) return 255;
    return static_cast<std::uint8_t>(v);
}

int sat_i32(double v) {
    if (!(v > -2147483648.0)) return -2147483647 - 1;
    if (v > 2147483647.0) return 2147483647;
    return static_cast<int>(v);
}

// ASCII values represent the declared storage type; narrowing through it
// keeps ascii and binary reads bit-identical.
double ply_narrow(double v, PlyType t) {
    switch (t) {
        case PlyType::i8: return static_cast<double>(static_cast<std::int8_t>(v));
        case PlyType::u8: return static_cast<double>(static_cast<std::uint8_t>(v));
        case PlyType::i16: return static_cast<double>(static_cast<std::int16_t>(v));
        case PlyType::u16: return static_cast<double>(static_cast<std::uint16_t>(v));
        case PlyType::i32: return static_cast<double>(static_cast<std::int32_t>(v));
        case PlyType::u32: return static_cast<double>(static_cast<std::uint32_t>(v));
        case PlyType::f32: return static_cast<double>(static_cast<float>(v));
        case PlyType::f64: return v;
    }
    return v;
}

struct PlyElement {
    std::string name;
    std::size_t count = 0;
    std::vector<PlyProperty> properties;
};

std::vector<std::string> split_tokens(std::string_view line) {
    std::vector<std::string> tokens;
    std::size_t i = 0;
    while (i < line.size()) {
        while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
        const std::size_t start = i;
        while (i < line.size() && !std::isspace(static_cast<unsigned char>(line[i]))) ++i;
        if (i > start) tokens.emplace_back(line.substr(start, i - start));
    }
    return tokens;
}

struct PlyHeader {
    bool binary = false;
    std::vector<PlyElement> elements;
    std::size_t body_offset = 0;
};

PlyHeader parse_ply_header(const std::string& data) {
    PlyHeader header;
    std::size_t pos = 0;
    bool saw_format = false;
    bool first = true;

    while (true) {
        const std::size_t line_start = pos;
        const std::size_t nl = data.find('\n', pos);
        if (nl == std::string::npos) throw IoError("unterminated PLY header", line_start);
        std::string_view line(data.data() + line_start, nl - line_start);
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        pos = nl + 1;

        if (first) {
            if (line != "ply") throw IoError("not a PLY file (missing 'ply' magic)", 0);
            first = false;
            continue;
        }
        const auto tokens = split_tokens(line);
        if (tokens.empty()) continue;

        if (tokens[0] == "comment" || tokens[0] == "obj_info") continue;
        if (tokens[0] == "format") {
            if (tokens.size() < 3) throw IoError("malformed format line", line_start);
            if (tokens[1] == "ascii")
                header.binary = false;
            else if (tokens[1] == "binary_little_endian")
                header.binary = true;
            else if (tokens[1] == "binary_big_endian")
                throw IoError("big-endian PLY is not supported", line_start);
            else
                throw IoError("unknown PLY format '" + tokens[1] + "'", line_start);
            saw_format = true;
            continue;
        }
        if (tokens[0] == "element") {
            if (tokens.size() != 3) throw IoError("malformed element line", line_start);
            PlyElement element;
            element.name = tokens[1];
            std::size_t count = 0;
            const auto [ptr, ec] = std::from_chars(tokens[2].data(), tokens[2].data() + tokens[2].size(), count);
            if (ec != std::errc() || ptr != tokens[2].data() + tokens[2].size())
                throw IoError("bad element count '" + tokens[2] + "'", line_start);
            element.count = count;
            header.elements.push_back(std::move(element));
            continue;
        }
        if (tokens[0] == "property") {
            if (header.elements.empty()) throw IoError("property before any element", line_start);
            PlyProperty prop;
            if (tokens.size() == 5 && tokens[1] == "list") {
                const auto count_type = ply_type_of(tokens[2]);
                const auto type = ply_type_of(tokens[3]);
                if (!count_type || !type) throw IoError("unknown list property type", line_start);
                if (*count_type == PlyType::f32 || *count_type == PlyType::f64)
                    throw IoError("list count type must be integral", line_start);
                prop.is_list = true;
                prop.count_type = *count_type;
                prop.type = *type;
                prop.name = tokens[4];
            } else if (tokens.size() == 3) {
                const auto type = ply_type_of(tokens[1]);
                if (!type) throw IoError("unknown property type '" + tokens[1] + "'", line_start);
                prop.type = *type;
                prop.name = tokens[2];
            } else {
                throw IoError("malformed property line", line_start);
            }
            header.elements.back().properties.push_back(std::move(prop));
            continue;
        }
        if (tokens[0] == "end_header") {
            if (!saw_format) throw IoError("PLY header has no format line", line_start);
            header.body_offset = pos;
            return header;
        }
        throw IoError("unrecognized header line '" + std::string(tokens[0]) + "'", line_start);
    }
}

struct VertexColumns {
    int x = -1, y = -1, z = -1;
    int red = -1, green = -1, blue = -1;
    int sem = -1, ins = -1;
};

VertexColumns map_vertex_columns(const PlyElement& element) {
    VertexColumns cols;
    for (std::size_t i = 0; i < element.properties.size(); ++i) {
        const auto& name = element.properties[i].name;
        const int idx = static_cast<int>(i);
        if (name == "x") cols.x = idx;
        else if (name == "y") cols.y = idx;
        else if (name == "z") cols.z = idx;
        else if (name == "red" || name == "r") cols.red = idx;
        else if (name == "green" || name == "g") cols.green = idx;
        else if (name == "blue" || name == "b") cols.blue = idx;
        else if (name == "sem" || name == "semantic" || name == "class" || name == "label") cols.sem = idx;
        else if (name == "ins" || name == "instance") cols.ins = idx;
    }
    return cols;
}

} // namespace

PointCloud read_ply(const std::filesystem::path& path) {
    const std::string data = read_file(path);
    const PlyHeader header = parse_ply_header(data);

    PointCloud cloud;
    std::size_t offset = header.body_offset;

    for (const auto& element : header.elements) {
        const bool is_vertex = element.name == "vertex";
        VertexColumns cols;
        if (is_vertex) {
            cols = map_vertex_columns(element);
            if (cols.x < 0 || cols.y < 0 || cols.z < 0)
                throw IoError("vertex element lacks x/y/z properties", header.body_offset);
            for (const auto& prop : element.properties)
                if (prop.is_list) throw IoError("list property '" + prop.name + "' in vertex element", header.body_offset);
            cloud.positions.reserve(element.count);
            const bool has_rgb = cols.red >= 0 && cols.green >= 0 && cols.blue >= 0;
            if (has_rgb) cloud.colors.emplace();
            if (cols.sem >= 0) cloud.semantic.emplace();
            if (cols.ins >= 0) cloud.instance.emplace();
        }

        if (header.binary) {
            if (is_vertex || std::none_of(element.properties.begin(), element.properties.end(),
                                          [](const PlyProperty& p) { return p.is_list; })) {
                std::size_t row_size = 0;
                for (const auto& prop : element.properties) row_size += prop.is_list ? 0 : ply_type_size(prop.type);

                std::vector<double> row(element.properties.size());
                for (std::size_t r = 0; r < element.count; ++r) {
                    if (offset + row_size > data.size())
                        throw IoError("element '" + element.name + "' truncated: expected " +
                                          std::to_string(element.count) + " rows, got " + std::to_string(r),
                                      data.size());
                    if (!is_vertex) {
                        offset += row_size;
                        continue;
                    }
                    std::size_t field_off = offset;
                    for (std::size_t p = 0; p < element.properties.size(); ++p) {
                        row[p] = ply_read_scalar(data.data() + field_off, element.properties[p].type);
                        field_off += ply_type_size(element.properties[p].type);
                    }
                    offset += row_size;
                    cloud.positions.push_back({row[static_cast<std::size_t>(cols.x)],
                                               row[static_cast<std::size_t>(cols.y)],
                                               row[static_cast<std::size_t>(cols.z)]});
                    if (cloud.colors)
                        cloud.colors->push_back({sat_u8(row[static_cast<std::size_t>(cols.red)]),
                                                 sat_u8(row[static_cast<std::size_t>(cols.green)]),
                                                 sat_u8(row[static_cast<std::size_t>(cols.blue)])});
                    if (cloud.semantic) cloud.semantic->push_back(sat_i32(row[static_cast<std::size_t>(cols.sem)]));
                    if (cloud.instance) cloud.instance->push_back(sat_i32(row[static_cast<std::size_t>(cols.ins)]));
                }
            } else {
                // Non-vertex element with list properties: walk rows by size.
                for (std::size_t r = 0; r < element.count; ++r) {
                    for (const auto& prop : element.properties) {
                        if (!prop.is_list) {
                            offset += ply_type_size(prop.type);
                        } else {
                            if (offset + ply_type_size(prop.count_type) > data.size())
                                throw IoError("element '" + element.name + "' truncated", data.size());
                            const double raw = ply_read_scalar(data.data() + offset, prop.count_type);
                            const auto n = static_cast<std::size_t>(raw > 0.0 ? raw : 0.0);
                            offset += ply_type_size(prop.count_type) + n * ply_type_size(prop.type);
                        }
                        if (offset > data.size())
                            throw IoError("element '" + element.name + "' truncated", data.size());
                    }
                }
            }
        } else {
            std::vector<double> row(element.properties.size());
            for (std::size_t r = 0; r < element.count; ++r) {
                if (offset >= data.size())
                    throw IoError("element '" + element.name + "' truncated: expected " + std::to_string(element.count) +
                                      " rows, got " + std::to_string(r),
                                  data.size());
                const std::size_t line_start = offset;
                std::size_t nl = data.find('\n', offset);
                if (nl == std::string::npos) nl = data.size();
                std::string_view line(data.data() + line_start, nl - line_start);
                offset = nl < data.size() ? nl + 1 : nl;
                if (!is_vertex) continue;

                const auto tokens = split_tokens(line);
                if (tokens.size() < element.properties.size())
                    throw IoError("vertex row " + std::to_string(r) + " has " + std::to_string(tokens.size()) +
                                      " of " + std::to_string(element.properties.size()) + " values",
                                  line_start);
                for (std::size_t p = 0; p < element.properties.size(); ++p) {
                    char* end = nullptr;
                    row[p] = std::strtod(tokens[p].c_str(), &end);
                    if (end == tokens[p].c_str())
                        throw IoError("bad numeric value '" + tokens[p] + "' in vertex row " + std::to_string(r),
                                      line_start);
                    row[p] = ply_narrow(row[p], element.properties[p].type);
                }
                cloud.positions.push_back({row[static_cast<std::size_t>(cols.x)], row[static_cast<std::size_t>(cols.y)],
                                           row[static_cast<std::size_t>(cols.z)]});
                if (cloud.colors)
                    cloud.colors->push_back({sat_u8(row[static_cast<std::size_t>(cols.red)]),
                                             sat_u8(row[static_cast<std::size_t>(cols.green)]),
                                             sat_u8(row[static_cast<std::size_t>(cols.blue)])});
                if (cloud.semantic) cloud.semantic->push_back(sat_i32(row[static_cast<std::size_t>(cols.sem)]));
                if (cloud.instance) cloud.instance->push_back(sat_i32(row[static_cast<std::size_t>(cols.ins)]));
            }
        }
    }
    return cloud;
}

void write_ply(const PointCloud& cloud, const std::filesystem::path& path, bool binary) {
    const std::size_t n = cloud.size();
    if (cloud.colors && cloud.colors->size() != n) throw IoError("write_ply: colors length mismatch");
    if (cloud.semantic && cloud.semantic->size() != n) throw IoError("write_ply: semantic length mismatch");
    if (cloud.instance && cloud.instance->size() != n) throw IoError("write_ply: instance length mismatch");

    std::string out;
    out.reserve(128 + n * (binary ? 20 : 48));
    out += "ply\n";
    out += binary ? "format binary_little_endian 1.0\n" : "format ascii 1.0\n";
    out += "element vertex " + std::to_string(n) + "\n";
    out += "property float x\nproperty float y\nproperty float z\n";
    if (cloud.colors) out += "property uchar red\nproperty uchar green\nproperty uchar blue\n";
    if (cloud.semantic) out += "property int sem\n";
    if (cloud.instance) out += "property int ins\n";
    out += "end_header\n";

    char buf[64];
    for (std::size_t i = 0; i < n; ++i) {
        const Vec3& p = cloud.positions[i];
        if (binary) {
            put_le(out, static_cast<float>(p.x));
            put_le(out, static_cast<float>(p.y));
            put_le(out, static_cast<float>(p.z));
            if (cloud.colors)
                for (std::uint8_t ch : (*cloud.colors)[i]) put_le(out, ch);
            if (cloud.semantic) put_le(out, static_cast<std::int32_t>((*cloud.semantic)[i]));
            if (cloud.instance) put_le(out, static_cast<std::int32_t>((*cloud.instance)[i]));
        } else {
            // %.9g round-trips 32-bit floats exactly.
            std::snprintf(buf, sizeof(buf), "%.9g %.9g %.9g", static_cast<double>(static_cast<float>(p.x)),
                          static_cast<double>(static_cast<float>(p.y)), static_cast<double>(static_cast<float>(p.z)));
            out += buf;
            if (cloud.colors) {
                const auto& c = (*cloud.colors)[i];
                std::snprintf(buf, sizeof(buf), " %u %u %u", c[0], c[1], c[2]);
                out += buf;
            }
            if (cloud.semantic) out += " " + std::to_string((*cloud.semantic)[i]);
            if (cloud.instance) out += " " + std::to_string((*cloud.instance)[i]);
            out += "\n";
        }
    }
    write_file(path, out);
}

PredictionSet read_predictions(const std::filesystem::path& path) {
    const std::string data = read_file(path);
    constexpr std::size_t header_size = 24;
    if (data.size() < header_size) throw IoError("prediction file shorter than header", data.size());
    if (std::memcmp(data.data(), "PPRD", 4) != 0) throw IoError("bad magic, expected 'PPRD'", 0);
    const auto version = get_le<std::uint32_t>(data.data() + 4);
    if (version != kPredictionVersion) throw IoError("unsupported prediction version " + std::to_string(version), 4);
    const auto n = static_cast<std::size_t>(get_le<std::uint64_t>(data.data() + 8));
    const auto n_classes = static_cast<std::size_t>(get_le<std::uint16_t>(data.data() + 16));
    const auto emb_dim = static_cast<std::size_t>(get_le<std::uint16_t>(data.data() + 18));
    const auto flags = get_le<std::uint32_t>(data.data() + 20);

    if (flags == 0 || (flags & ~(kPredFlagProbs | kPredFlagEmbeddings | kPredFlagOffsets)) != 0)
        throw IoError("bad flags field " + std::to_string(flags), 20);
    if ((flags & kPredFlagProbs) && n_classes == 0) throw IoError("probs flagged but n_classes is 0", 16);
    if ((flags & kPredFlagEmbeddings) && emb_dim == 0) throw IoError("embeddings flagged but emb_dim is 0", 18);

    std::size_t expected = 0;
    if (flags & kPredFlagProbs) expected += n * n_classes;
    if (flags & kPredFlagEmbeddings) expected += n * emb_dim;
    if (flags & kPredFlagOffsets) expected += n * 3;
    expected *= sizeof(float);
    if (data.size() - header_size != expected)
        throw IoError("payload size " + std::to_string(data.size() - header_size) + " != declared " +
                          std::to_string(expected),
                      std::min(data.size(), header_size + expected));

    std::size_t offset = header_size;
    auto read_matrix = [&](std::size_t rows, std::size_t cols) {
        Matrix m(rows, cols);
        for (std::size_t i = 0; i < rows * cols; ++i) {
            m.data()[i] = static_cast<double>(get_le<float>(data.data() + offset));
            offset += sizeof(float);
        }
        return m;
    };

    PredictionSet preds;
    if (flags & kPredFlagProbs) preds.class_probs = read_matrix(n, n_classes);
    if (flags & kPredFlagEmbeddings) preds.embeddings = read_matrix(n, emb_dim);
    if (flags & kPredFlagOffsets) {
        std::vector<Vec3> offsets(n);
        for (std::size_t i = 0; i < n; ++i) {
            offsets[i].x = static_cast<double>(get_le<float>(data.data() + offset));
            offsets[i].y = static_cast<double>(get_le<float>(data.data() + offset + 4));
            offsets[i].z = static_cast<double>(get_le<float>(data.data() + offset + 8));
            offset += 12;
        }
        preds.offsets = std::move(offsets);
    }
    return preds;
}

void write_predictions(const PredictionSet& preds, const std::filesystem::path& path) {
    const auto issues = validate(preds, 0);
    for (const auto& v : issues)
        if (v.kind == Violation::Kind::empty_prediction || v.kind == Violation::Kind::length_mismatch)
            throw IoError("write_predictions: " + v.message);

    const std::size_t n = preds.size();
    std::uint32_t flags = 0;
    if (preds.class_probs) flags |= kPredFlagProbs;
    if (preds.embeddings) flags |= kPredFlagEmbeddings;
    if (preds.offsets) flags |= kPredFlagOffsets;

    std::string out;
    out.append("PPRD", 4);
    put_le(out, kPredictionVersion);
    put_le(out, static_cast<std::uint64_t>(n));
    put_le(out, static_cast<std::uint16_t>(preds.class_probs ? preds.class_probs->cols() : 0));
    put_le(out, static_cast<std::uint16_t>(preds.embeddings ? preds.embeddings->cols() : 0));
    put_le(out, flags);
    if (preds.class_probs)
        for (double v : preds.class_probs->data()) put_le(out, static_cast<float>(v));
    if (preds.embeddings)
        for (double v : preds.embeddings->data()) put_le(out, static_cast<float>(v));
    if (preds.offsets)
        for (const Vec3& o : *preds.offsets) {
            put_le(out, static_cast<float>(o.x));
            put_le(out, static_cast<float>(o.y));
            put_le(out, static_cast<float>(o.z));
        }
    write_file(path, out);
}

namespace {

nlohmann::json score_json(const metrics::Score& s) {
    if (!s) return nullptr;
    return *s;
}

} // namespace

nlohmann::json report_to_json(const metrics::MetricsReport& report) {
    nlohmann::json j;
    const Taxonomy& tax = report.taxonomy;

    auto& sem = j["semantic"];
    sem["oacc"] = score_json(report.semantic.oacc);
    sem["miou"] = score_json(report.semantic.miou);
    sem["per_class_iou"] = nlohmann::json::array();
    for (const auto& v : report.semantic.per_class_iou) sem["per_class_iou"].push_back(score_json(v));
    sem["skipped_classes"] = report.semantic.skipped_classes;

    auto& inst = j["instance"];
    inst["mcov"] = score_json(report.instance.mcov);
    inst["mwcov"] = score_json(report.instance.mwcov);
    inst["mprec"] = score_json(report.instance.mprec);
    inst["mrec"] = score_json(report.instance.mrec);
    inst["f1"] = score_json(report.instance.f1);
    inst["per_class"] = nlohmann::json::object();
    for (const auto& [cls, scores] : report.instance.per_class) {
        auto& e = inst["per_class"][tax.class_names[static_cast<std::size_t>(cls)]];
        e["cov"] = score_json(scores.cov);
        e["wcov"] = score_json(scores.wcov);
        e["prec"] = score_json(scores.prec);
        e["rec"] = score_json(scores.rec);
    }

    auto& pan = j["panoptic"];
    pan["pq"] = score_json(report.panoptic.pq);
    pan["pq_dagger"] = score_json(report.panoptic.pq_dagger);
    pan["rq"] = score_json(report.panoptic.rq);
    pan["sq"] = score_json(report.panoptic.sq);
    pan["things"] = {{"pq", score_json(report.panoptic.things.pq)},
                     {"rq", score_json(report.panoptic.things.rq)},
                     {"sq", score_json(report.panoptic.things.sq)}};
    pan["stuff"] = {{"pq", score_json(report.panoptic.stuff.pq)},
                    {"rq", score_json(report.panoptic.stuff.rq)},
                    {"sq", score_json(report.panoptic.stuff.sq)}};
    pan["per_class"] = nlohmann::json::object();
    for (const auto& [cls, scores] : report.panoptic.per_class) {
        auto& e = pan["per_class"][tax.class_names[static_cast<std::size_t>(cls)]];
        e["pq"] = score_json(scores.pq);
        e["pq_dagger"] = score_json(scores.pq_dagger);
        e["rq"] = score_json(scores.rq);
        e["sq"] = score_json(scores.sq);
    }
    return j;
}

void write_report(const metrics::MetricsReport& report, const std::filesystem::path& path) {
    write_file(path, report_to_json(report).dump(2) + "\n");
}

} // namespace panoptic::io
