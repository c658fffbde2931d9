#include "unimatch/error.hpp"
#include "unimatch/mesh.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

namespace unimatch {

namespace {

struct RawMesh
{
    std::vector<Eigen::Vector3d> vertices;
    std::vector<Eigen::Vector3i> triangles;
};

[[noreturn]] void parse_fail(const std::filesystem::path& path, const std::string& what)
{
    throw Error(ErrorCode::ParseError, path.string() + ": " + what);
}

std::string trim(const std::string& s)
{
    auto begin = std::find_if_not(s.begin(), s.end(), [](unsigned char c) { return std::isspace(c); });
    auto end = std::find_if_not(s.rbegin(), s.rend(), [](unsigned char c) { return std::isspace(c); }).base();
    return begin < end ? std::string(begin, end) : std::string();
}

// Fan rule: (v0, v1, v2), (v0, v2, v3), ...
void fan_triangulate(const std::vector<int>& polygon, RawMesh& out)
{
    for (size_t i = 1; i + 1 < polygon.size(); ++i) {
        out.triangles.emplace_back(polygon[0], polygon[i], polygon[i + 1]);
    }
}

// Next non-empty, non-comment line.
bool next_content_line(std::istream& in, std::string& line)
{
    while (std::getline(in, line)) {
        auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (!line.empty()) return true;
    }
    return false;
}

RawMesh read_off(const std::filesystem::path& path, std::istream& in)
{
    std::string line;
    if (!next_content_line(in, line)) parse_fail(path, "empty file");
    std::istringstream header(line);
    std::string magic;
    header >> magic;
    if (magic.size() < 3 || magic.substr(magic.size() - 3) != "OFF") {
        parse_fail(path, "missing OFF header");
    }
    long nv = -1, nf = -1, ne = 0;
    if (!(header >> nv >> nf)) {
        if (!next_content_line(in, line)) parse_fail(path, "missing counts");
        std::istringstream counts(line);
        if (!(counts >> nv >> nf)) parse_fail(path, "bad counts line");
        counts >> ne;
    }
    if (nv < 0 || nf < 0) parse_fail(path, "negative counts");

    RawMesh raw;
    raw.vertices.reserve(static_cast<size_t>(nv));
    for (long i = 0; i < nv; ++i) {
        if (!next_content_line(in, line)) parse_fail(path, "truncated vertex list");
        std::istringstream ls(line);
        Eigen::Vector3d p;
        if (!(ls >> p.x() >> p.y() >> p.z())) parse_fail(path, "bad vertex line " + std::to_string(i));
        raw.vertices.push_back(p);
    }
    for (long f = 0; f < nf; ++f) {
        if (!next_content_line(in, line)) parse_fail(path, "truncated face list");
        std::istringstream ls(line);
        int count = 0;
        if (!(ls >> count) || count < 3) parse_fail(path, "bad face line " + std::to_string(f));
        std::vector<int> polygon(static_cast<size_t>(count));
        for (auto& idx : polygon) {
            if (!(ls >> idx)) parse_fail(path, "bad face line " + std::to_string(f));
        }
        fan_triangulate(polygon, raw);
    }
    return raw;
}

RawMesh read_obj(const std::filesystem::path& path, std::istream& in)
{
    RawMesh raw;
    std::string line;
    long line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        line = trim(line);
        if (line.empty() || line[0] == '#') continue;
        std::istringstream ls(line);
        std::string tag;
        ls >> tag;
        if (tag == "v") {
            Eigen::Vector3d p;
            if (!(ls >> p.x() >> p.y() >> p.z())) parse_fail(path, "bad vertex at line " + std::to_string(line_no));
            raw.vertices.push_back(p);
        } else if (tag == "f") {
            std::vector<int> polygon;
            std::string token;
            while (ls >> token) {
                auto slash = token.find('/');
                std::string head = token.substr(0, slash);
                int idx = 0;
                try {
                    size_t used = 0;
                    idx = std::stoi(head, &used);
                    if (used != head.size()) throw std::invalid_argument(head);
                } catch (const std::exception&) {
                    parse_fail(path, "bad face index '" + token + "' at line " + std::to_string(line_no));
                }
                if (idx > 0) {
                    polygon.push_back(idx - 1);
                } else if (idx < 0) {
                    polygon.push_back(static_cast<int>(raw.vertices.size()) + idx);
                } else {
                    parse_fail(path, "face index 0 at line " + std::to_string(line_no));
                }
            }
            if (polygon.size() < 3) parse_fail(path, "face with fewer than 3 vertices at line " + std::to_string(line_no));
            fan_triangulate(polygon, raw);
        }
    }
    return raw;
}

RawMesh read_ply_ascii(const std::filesystem::path& path, std::istream& in)
{
    struct Element
    {
        std::string name;
        long count = 0;
        std::vector<std::string> properties;
        bool has_list = false;
    };

    std::string line;
    if (!std::getline(in, line) || trim(line) != "ply") parse_fail(path, "missing ply magic");
    std::vector<Element> elements;
    bool ascii = false;
    while (true) {
        if (!std::getline(in, line)) parse_fail(path, "unterminated header");
        line = trim(line);
        if (line == "end_header") break;
        std::istringstream ls(line);
        std::string word;
        ls >> word;
        if (word == "format") {
            std::string kind;
            ls >> kind;
            ascii = kind == "ascii";
        } else if (word == "element") {
            Element e;
            ls >> e.name >> e.count;
            elements.push_back(e);
        } else if (word == "property") {
            if (elements.empty()) parse_fail(path, "property before element");
            std::string type;
            ls >> type;
            if (type == "list") {
                std::string count_type, item_type, name;
                ls >> count_type >> item_type >> name;
                elements.back().has_list = true;
                elements.back().properties.push_back(name);
            } else {
                std::string name;
                ls >> name;
                elements.back().properties.push_back(name);
            }
        }
    }
    if (!ascii) parse_fail(path, "only ascii PLY is supported");

    RawMesh raw;
    for (const auto& element : elements) {
        for (long i = 0; i < element.count; ++i) {
            if (!std::getline(in, line)) parse_fail(path, "truncated " + element.name + " block");
            std::istringstream ls(line);
            if (element.name == "vertex") {
                std::vector<double> values(element.properties.size());
                for (auto& v : values) {
                    if (!(ls >> v)) parse_fail(path, "bad vertex line " + std::to_string(i));
                }
                auto find = [&](const char* key) {
                    auto it = std::find(element.properties.begin(), element.properties.end(), key);
                    if (it == element.properties.end()) parse_fail(path, std::string("vertex lacks property ") + key);
                    return values[static_cast<size_t>(it - element.properties.begin())];
                };
                raw.vertices.emplace_back(find("x"), find("y"), find("z"));
            } else if (element.name == "face") {
                if (!element.has_list) parse_fail(path, "face element without index list");
                int count = 0;
                if (!(ls >> count) || count < 3) parse_fail(path, "bad face line " + std::to_string(i));
                std::vector<int> polygon(static_cast<size_t>(count));
                for (auto& idx : polygon) {
                    if (!(ls >> idx)) parse_fail(path, "bad face line " + std::to_string(i));
                }
                fan_triangulate(polygon, raw);
            }
        }
    }
    return raw;
}

} // namespace

TriangleMesh load_mesh(const std::filesystem::path& path, MeshFormat format, const MeshLoadOptions& options)
{
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());

    RawMesh raw;
    switch (format) {
    case MeshFormat::OFF: raw = read_off(path, in); break;
    case MeshFormat::OBJ: raw = read_obj(path, in); break;
    case MeshFormat::PLY: raw = read_ply_ascii(path, in); break;
    }

    Eigen::Matrix<double, Eigen::Dynamic, 3> V(static_cast<Index>(raw.vertices.size()), 3);
    for (size_t i = 0; i < raw.vertices.size(); ++i) V.row(static_cast<Index>(i)) = raw.vertices[i].transpose();
    Eigen::Matrix<int, Eigen::Dynamic, 3> F(static_cast<Index>(raw.triangles.size()), 3);
    for (size_t i = 0; i < raw.triangles.size(); ++i) F.row(static_cast<Index>(i)) = raw.triangles[i].transpose();

    TriangleMesh mesh{std::move(V), std::move(F), path.stem().string()};
    try {
        validate_mesh(mesh, options);
    } catch (const Error& e) {
        throw e.within(path.string());
    }
    return mesh;
}

TriangleMesh load_mesh(const std::filesystem::path& path, const MeshLoadOptions& options)
{
    std::string ext = path.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    if (ext == ".off") return load_mesh(path, MeshFormat::OFF, options);
    if (ext == ".obj") return load_mesh(path, MeshFormat::OBJ, options);
    if (ext == ".ply") return load_mesh(path, MeshFormat::PLY, options);
    throw Error(ErrorCode::ParseError, path.string() + ": unknown mesh extension '" + ext + "'");
}

void save_off(const TriangleMesh& mesh, const std::filesystem::path& path)
{
    std::ofstream out(path);
    if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
    out << "OFF\n" << mesh.n_vertices() << ' ' << mesh.n_faces() << " 0\n";
    out << std::setprecision(17);
    for (Index i = 0; i < mesh.n_vertices(); ++i) {
        out << mesh.vertices(i, 0) << ' ' << mesh.vertices(i, 1) << ' ' << mesh.vertices(i, 2) << '\n';
    }
    for (Index f = 0; f < mesh.n_faces(); ++f) {
        out << "3 " << mesh.faces(f, 0) << ' ' << mesh.faces(f, 1) << ' ' << mesh.faces(f, 2) << '\n';
    }
}

} // namespace unimatch
