#pragma once

#include <algorithm>
#include <bit>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include "densecorr/errors.hpp"
#include "densecorr/mesh.hpp"

namespace densecorr {

namespace detail {

static_assert(std::endian::native == std::endian::little, "binary formats assume a little-endian host");

inline std::string lowercase(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return s;
}

inline std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open file: " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

[[noreturn]] inline void format_error(const std::filesystem::path& path, std::size_t line, const std::string& msg) {
    throw FormatError(path.string() + ":" + std::to_string(line) + ": " + msg);
}

inline TriMesh assemble(std::vector<double>& xyz, std::vector<double>& rgb, std::vector<int>& tri) {
    TriMesh mesh;
    const Index n = static_cast<Index>(xyz.size() / 3);
    mesh.vertices = Eigen::Map<Vertices>(xyz.data(), n, 3);
    if (!rgb.empty()) mesh.colors = Eigen::Map<Colors>(rgb.data(), n, 3);
    mesh.triangles = Eigen::Map<Triangles>(tri.data(), static_cast<Index>(tri.size() / 3), 3);
    return mesh;
}

// Splits text into lines, strips '#' comments and surrounding whitespace, and
// keeps the 1-based line number for error messages.
struct TextLine {
    std::size_t number;
    std::string text;
};

inline std::vector<TextLine> content_lines(const std::string& data, std::size_t begin = 0, std::size_t first_line = 1) {
    std::vector<TextLine> lines;
    std::size_t pos = begin;
    std::size_t number = first_line;
    while (pos < data.size()) {
        std::size_t end = data.find('\n', pos);
        if (end == std::string::npos) end = data.size();
        std::string line = data.substr(pos, end - pos);
        if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        auto notspace = [](unsigned char c) { return !std::isspace(c); };
        line.erase(line.begin(), std::find_if(line.begin(), line.end(), notspace));
        line.erase(std::find_if(line.rbegin(), line.rend(), notspace).base(), line.end());
        if (!line.empty()) lines.push_back({number, std::move(line)});
        pos = end + 1;
        ++number;
    }
    return lines;
}

inline TriMesh load_obj(const std::filesystem::path& path) {
    const std::string data = read_file(path);
    std::vector<double> xyz, rgb;
    std::vector<int> tri;
    std::size_t colored = 0, plain = 0;
    for (const auto& [number, text] : content_lines(data)) {
        std::istringstream ls(text);
        std::string tag;
        ls >> tag;
        if (tag == "v") {
            std::vector<double> vals;
            double x;
            while (ls >> x) vals.push_back(x);
            if (!ls.eof()) format_error(path, number, "malformed vertex line");
            if (vals.size() == 3 || vals.size() == 4) {
                ++plain;
            } else if (vals.size() == 6 || vals.size() == 7) {
                ++colored;
                rgb.insert(rgb.end(), vals.begin() + 3, vals.begin() + 6);
            } else {
                format_error(path, number, "vertex line needs 3 coordinates (optionally + rgb)");
            }
            xyz.insert(xyz.end(), vals.begin(), vals.begin() + 3);
        } else if (tag == "f") {
            std::vector<int> idx;
            std::string tok;
            const auto nverts = static_cast<long>(xyz.size() / 3);
            while (ls >> tok) {
                const std::string head = tok.substr(0, tok.find('/'));
                long v = 0;
                try {
                    std::size_t used = 0;
                    v = std::stol(head, &used);
                    if (used != head.size()) throw std::invalid_argument(head);
                } catch (const std::exception&) {
                    format_error(path, number, "bad face index '" + tok + "'");
                }
                if (v < 0) v = nverts + v + 1;
                if (v < 1 || v > nverts) format_error(path, number, "face index out of range: " + tok);
                idx.push_back(static_cast<int>(v - 1));
            }
            if (idx.size() != 3) {
                throw TopologyError(path.string() + ":" + std::to_string(number) + ": face with " +
                                    std::to_string(idx.size()) + " vertices; only triangles are supported");
            }
            tri.insert(tri.end(), idx.begin(), idx.end());
        }
        // vt, vn, o, g, s, usemtl, mtllib: ignored
    }
    if (colored > 0 && plain > 0) {
        warn(path.string() + ": only some vertices carry colors; colors dropped");
        rgb.clear();
    }
    TriMesh mesh = assemble(xyz, rgb, tri);
    validate(mesh);
    return mesh;
}

inline TriMesh load_off(const std::filesystem::path& path) {
    const std::string data = read_file(path);
    const auto lines = content_lines(data);
    if (lines.empty()) format_error(path, 1, "empty OFF file");
    std::size_t li = 0;
    std::string header = lines[0].text;
    bool color = false;
    std::string rest;
    {
        std::istringstream hs(header);
        std::string magic;
        hs >> magic;
        if (magic == "COFF") color = true;
        else if (magic != "OFF") format_error(path, lines[0].number, "missing OFF header");
        std::getline(hs, rest);
    }
    ++li;
    long nv = 0, nf = 0;
    {
        std::istringstream cs(rest);
        if (!(cs >> nv >> nf)) {
            if (li >= lines.size()) format_error(path, lines[0].number, "missing element counts");
            std::istringstream cs2(lines[li].text);
            if (!(cs2 >> nv >> nf)) format_error(path, lines[li].number, "bad element counts");
            ++li;
        }
    }
    if (nv < 0 || nf < 0) format_error(path, lines[0].number, "negative element counts");
    std::vector<double> xyz, rgb;
    std::vector<int> tri;
    xyz.reserve(static_cast<std::size_t>(nv) * 3);
    for (long i = 0; i < nv; ++i, ++li) {
        if (li >= lines.size()) format_error(path, lines.back().number, "unexpected end of file in vertex list");
        std::istringstream vs(lines[li].text);
        double x, y, z;
        if (!(vs >> x >> y >> z)) format_error(path, lines[li].number, "bad vertex");
        xyz.insert(xyz.end(), {x, y, z});
        if (color) {
            std::vector<double> c;
            double cv;
            while (vs >> cv) c.push_back(cv);
            if (c.size() < 3) format_error(path, lines[li].number, "COFF vertex without color");
            const bool bytes = std::any_of(c.begin(), c.begin() + 3, [](double v) { return v > 1.0; });
            for (int k = 0; k < 3; ++k) rgb.push_back(bytes ? c[k] / 255.0 : c[k]);
        }
    }
    for (long i = 0; i < nf; ++i, ++li) {
        if (li >= lines.size()) format_error(path, lines.back().number, "unexpected end of file in face list");
        std::istringstream fs(lines[li].text);
        long cnt;
        if (!(fs >> cnt)) format_error(path, lines[li].number, "bad face");
        if (cnt != 3) {
            throw TopologyError(path.string() + ":" + std::to_string(lines[li].number) + ": face with " +
                                std::to_string(cnt) + " vertices; only triangles are supported");
        }
        long a, b, c;
        if (!(fs >> a >> b >> c)) format_error(path, lines[li].number, "bad face indices");
        if (a < 0 || b < 0 || c < 0 || a >= nv || b >= nv || c >= nv) {
            format_error(path, lines[li].number, "face index out of range");
        }
        tri.insert(tri.end(), {static_cast<int>(a), static_cast<int>(b), static_cast<int>(c)});
    }
    TriMesh mesh = assemble(xyz, rgb, tri);
    validate(mesh);
    return mesh;
}

enum class PlyType { Int8, UInt8, Int16, UInt16, Int32, UInt32, Float32, Float64 };

inline bool ply_type(const std::string& name, PlyType& out) {
    static const std::pair<const char*, PlyType> table[] = {
        {"char", PlyType::Int8},     {"int8", PlyType::Int8},      {"uchar", PlyType::UInt8},
        {"uint8", PlyType::UInt8},   {"short", PlyType::Int16},    {"int16", PlyType::Int16},
        {"ushort", PlyType::UInt16}, {"uint16", PlyType::UInt16},  {"int", PlyType::Int32},
        {"int32", PlyType::Int32},   {"uint", PlyType::UInt32},    {"uint32", PlyType::UInt32},
        {"float", PlyType::Float32}, {"float32", PlyType::Float32}, {"double", PlyType::Float64},
        {"float64", PlyType::Float64}};
    for (const auto& [n, t] : table) {
        if (name == n) {
            out = t;
            return true;
        }
    }
    return false;
}

inline std::size_t ply_size(PlyType t) {
    switch (t) {
        case PlyType::Int8:
        case PlyType::UInt8: return 1;
        case PlyType::Int16:
        case PlyType::UInt16: return 2;
        case PlyType::Int32:
        case PlyType::UInt32:
        case PlyType::Float32: return 4;
        case PlyType::Float64: return 8;
    }
    return 0;
}

struct PlyProperty {
    std::string name;
    PlyType type = PlyType::Float32;
    bool is_list = false;
    PlyType count_type = PlyType::UInt8;
};

struct PlyElement {
    std::string name;
    std::size_t count = 0;
    std::vector<PlyProperty> props;
};

template <typename T>
T read_le(const char* p) {
    T v;
    std::memcpy(&v, p, sizeof(T));
    return v;
}

inline double ply_binary_value(const char* p, PlyType t) {
    switch (t) {
        case PlyType::Int8: return read_le<std::int8_t>(p);
        case PlyType::UInt8: return read_le<std::uint8_t>(p);
        case PlyType::Int16: return read_le<std::int16_t>(p);
        case PlyType::UInt16: return read_le<std::uint16_t>(p);
        case PlyType::Int32: return read_le<std::int32_t>(p);
        case PlyType::UInt32: return read_le<std::uint32_t>(p);
        case PlyType::Float32: return read_le<float>(p);
        case PlyType::Float64: return read_le<double>(p);
    }
    return 0.0;
}

// Reads values one property at a time from either an ASCII token stream or a
// little-endian byte buffer.
class PlyReader {
public:
    PlyReader(const std::filesystem::path& path, const std::string& data, std::size_t body, bool binary)
        : path_(path), data_(data), pos_(body), binary_(binary) {
        if (!binary_) {
            line_ = 1 + static_cast<std::size_t>(std::count(data.begin(), data.begin() + static_cast<long>(body), '\n'));
        }
    }

    double next(PlyType t) {
        if (binary_) {
            const std::size_t sz = ply_size(t);
            if (pos_ + sz > data_.size()) throw FormatError(path_.string() + ": offset " + std::to_string(pos_) + ": unexpected end of binary data");
            double v = ply_binary_value(data_.data() + pos_, t);
            pos_ += sz;
            return v;
        }
        while (pos_ < data_.size() && std::isspace(static_cast<unsigned char>(data_[pos_]))) {
            if (data_[pos_] == '\n') ++line_;
            ++pos_;
        }
        if (pos_ >= data_.size()) format_error(path_, line_, "unexpected end of file");
        std::size_t end = pos_;
        while (end < data_.size() && !std::isspace(static_cast<unsigned char>(data_[end]))) ++end;
        const std::string tok = data_.substr(pos_, end - pos_);
        pos_ = end;
        try {
            std::size_t used = 0;
            double v = std::stod(tok, &used);
            if (used != tok.size()) throw std::invalid_argument(tok);
            return v;
        } catch (const std::exception&) {
            format_error(path_, line_, "bad numeric token '" + tok + "'");
        }
    }

    std::string where() const {
        return binary_ ? "offset " + std::to_string(pos_) : "line " + std::to_string(line_);
    }

private:
    const std::filesystem::path& path_;
    const std::string& data_;
    std::size_t pos_;
    bool binary_;
    std::size_t line_ = 0;
};

inline TriMesh load_ply(const std::filesystem::path& path) {
    const std::string data = read_file(path);
    std::size_t pos = 0;
    std::size_t line_no = 0;
    auto next_header_line = [&]() {
        if (pos >= data.size()) format_error(path, line_no, "unterminated PLY header");
        std::size_t end = data.find('\n', pos);
        if (end == std::string::npos) end = data.size();
        std::string line = data.substr(pos, end - pos);
        if (!line.empty() && line.back() == '\r') line.pop_back();
        pos = end + 1;
        ++line_no;
        return line;
    };
    if (next_header_line() != "ply") format_error(path, 1, "missing 'ply' magic");
    bool binary = false;
    std::vector<PlyElement> elements;
    for (;;) {
        const std::string line = next_header_line();
        std::istringstream ls(line);
        std::string kw;
        ls >> kw;
        if (kw == "end_header") break;
        if (kw == "format") {
            std::string fmt;
            ls >> fmt;
            if (fmt == "ascii") binary = false;
            else if (fmt == "binary_little_endian") binary = true;
            else format_error(path, line_no, "unsupported PLY format '" + fmt + "'");
        } else if (kw == "element") {
            PlyElement e;
            long long count = -1;
            ls >> e.name >> count;
            if (count < 0) format_error(path, line_no, "bad element count");
            e.count = static_cast<std::size_t>(count);
            elements.push_back(e);
        } else if (kw == "property") {
            if (elements.empty()) format_error(path, line_no, "property before element");
            PlyProperty p;
            std::string t;
            ls >> t;
            if (t == "list") {
                std::string ct, vt;
                ls >> ct >> vt >> p.name;
                p.is_list = true;
                if (!ply_type(ct, p.count_type) || !ply_type(vt, p.type)) format_error(path, line_no, "bad list property type");
            } else {
                ls >> p.name;
                if (!ply_type(t, p.type)) format_error(path, line_no, "unknown property type '" + t + "'");
            }
            elements.back().props.push_back(p);
        } else if (kw == "comment" || kw == "obj_info" || kw.empty()) {
            continue;
        } else {
            format_error(path, line_no, "unexpected header keyword '" + kw + "'");
        }
    }

    PlyReader reader(path, data, pos, binary);
    std::vector<double> xyz, rgb;
    std::vector<int> tri;
    std::size_t nverts = 0;
    for (const auto& e : elements) {
        if (e.name == "vertex") {
            nverts = e.count;
            int ix = -1, iy = -1, iz = -1, ir = -1, ig = -1, ib = -1;
            for (int k = 0; k < static_cast<int>(e.props.size()); ++k) {
                const auto& nm = e.props[k].name;
                if (nm == "x") ix = k;
                else if (nm == "y") iy = k;
                else if (nm == "z") iz = k;
                else if (nm == "red" || nm == "r" || nm == "diffuse_red") ir = k;
                else if (nm == "green" || nm == "g" || nm == "diffuse_green") ig = k;
                else if (nm == "blue" || nm == "b" || nm == "diffuse_blue") ib = k;
            }
            if (ix < 0 || iy < 0 || iz < 0) throw FormatError(path.string() + ": vertex element lacks x/y/z");
            const bool has_color = ir >= 0 && ig >= 0 && ib >= 0;
            std::vector<double> vals(e.props.size());
            for (std::size_t v = 0; v < e.count; ++v) {
                for (std::size_t k = 0; k < e.props.size(); ++k) {
                    const auto& p = e.props[k];
                    if (p.is_list) {
                        const auto cnt = static_cast<long>(reader.next(p.count_type));
                        for (long q = 0; q < cnt; ++q) reader.next(p.type);
                        vals[k] = 0.0;
                    } else {
                        vals[k] = reader.next(p.type);
                    }
                }
                xyz.insert(xyz.end(), {vals[ix], vals[iy], vals[iz]});
                if (has_color) {
                    for (int idx : {ir, ig, ib}) {
                        const PlyType t = e.props[idx].type;
                        const bool real = t == PlyType::Float32 || t == PlyType::Float64;
                        rgb.push_back(real ? vals[idx] : vals[idx] / 255.0);
                    }
                }
            }
        } else if (e.name == "face") {
            for (std::size_t f = 0; f < e.count; ++f) {
                for (const auto& p : e.props) {
                    if (!p.is_list) {
                        reader.next(p.type);
                        continue;
                    }
                    const auto cnt = static_cast<long>(reader.next(p.count_type));
                    std::vector<long> idx(static_cast<std::size_t>(std::max(cnt, 0L)));
                    for (long q = 0; q < cnt; ++q) idx[q] = static_cast<long>(reader.next(p.type));
                    if (p.name != "vertex_indices" && p.name != "vertex_index") continue;
                    if (cnt != 3) {
                        throw TopologyError(path.string() + ": " + reader.where() + ": face " + std::to_string(f) +
                                            " has " + std::to_string(cnt) + " vertices; only triangles are supported");
                    }
                    for (long v : idx) {
                        if (v < 0 || static_cast<std::size_t>(v) >= nverts) {
                            throw FormatError(path.string() + ": " + reader.where() + ": face index out of range");
                        }
                        tri.push_back(static_cast<int>(v));
                    }
                }
            }
        } else {
            for (std::size_t r = 0; r < e.count; ++r) {
                for (const auto& p : e.props) {
                    if (p.is_list) {
                        const auto cnt = static_cast<long>(reader.next(p.count_type));
                        for (long q = 0; q < cnt; ++q) reader.next(p.type);
                    } else {
                        reader.next(p.type);
                    }
                }
            }
        }
    }
    TriMesh mesh = assemble(xyz, rgb, tri);
    validate(mesh);
    return mesh;
}

}  // namespace detail

inline TriMesh load_mesh(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) throw DataError("mesh file not found: " + path.string());
    const std::string ext = detail::lowercase(path.extension().string());
    if (ext == ".obj") return detail::load_obj(path);
    if (ext == ".ply") return detail::load_ply(path);
    if (ext == ".off") return detail::load_off(path);
    throw FormatError(path.string() + ": unsupported mesh extension '" + ext + "' (expected .obj, .ply or .off)");
}

inline std::uint8_t color_byte(double c) {
    return static_cast<std::uint8_t>(std::lround(std::clamp(c, 0.0, 1.0) * 255.0));
}

// Writes a PLY file; colors are stored as 8-bit channels.
inline void save_ply(const std::filesystem::path& path, const TriMesh& mesh, bool binary = false) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write file: " + path.string());
    out << "ply\nformat " << (binary ? "binary_little_endian" : "ascii") << " 1.0\n";
    out << "element vertex " << mesh.num_vertices() << "\n";
    out << "property double x\nproperty double y\nproperty double z\n";
    if (mesh.colors) out << "property uchar red\nproperty uchar green\nproperty uchar blue\n";
    out << "element face " << mesh.num_triangles() << "\n";
    out << "property list uchar int vertex_indices\nend_header\n";
    if (binary) {
        for (Index i = 0; i < mesh.num_vertices(); ++i) {
            for (int c = 0; c < 3; ++c) {
                const double v = mesh.vertices(i, c);
                out.write(reinterpret_cast<const char*>(&v), sizeof v);
            }
            if (mesh.colors) {
                for (int c = 0; c < 3; ++c) {
                    const std::uint8_t b = color_byte((*mesh.colors)(i, c));
                    out.write(reinterpret_cast<const char*>(&b), 1);
                }
            }
        }
        for (Index f = 0; f < mesh.num_triangles(); ++f) {
            const std::uint8_t three = 3;
            out.write(reinterpret_cast<const char*>(&three), 1);
            for (int c = 0; c < 3; ++c) {
                const std::int32_t v = mesh.triangles(f, c);
                out.write(reinterpret_cast<const char*>(&v), sizeof v);
            }
        }
    } else {
        out << std::setprecision(17);
        for (Index i = 0; i < mesh.num_vertices(); ++i) {
            out << mesh.vertices(i, 0) << ' ' << mesh.vertices(i, 1) << ' ' << mesh.vertices(i, 2);
            if (mesh.colors) {
                for (int c = 0; c < 3; ++c) out << ' ' << static_cast<int>(color_byte((*mesh.colors)(i, c)));
            }
            out << '\n';
        }
        for (Index f = 0; f < mesh.num_triangles(); ++f) {
            out << "3 " << mesh.triangles(f, 0) << ' ' << mesh.triangles(f, 1) << ' ' << mesh.triangles(f, 2) << '\n';
        }
    }
    if (!out) throw DataError("failed writing " + path.string());
}

inline void save_off(const std::filesystem::path& path, const TriMesh& mesh) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write file: " + path.string());
    out << "OFF\n" << mesh.num_vertices() << ' ' << mesh.num_triangles() << " 0\n" << std::setprecision(17);
    for (Index i = 0; i < mesh.num_vertices(); ++i) {
        out << mesh.vertices(i, 0) << ' ' << mesh.vertices(i, 1) << ' ' << mesh.vertices(i, 2) << '\n';
    }
    for (Index f = 0; f < mesh.num_triangles(); ++f) {
        out << "3 " << mesh.triangles(f, 0) << ' ' << mesh.triangles(f, 1) << ' ' << mesh.triangles(f, 2) << '\n';
    }
}

}  // namespace densecorr
