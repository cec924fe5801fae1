#include "sonoloc/geometry_io.hpp"

#include "sonoloc/errors.hpp"

#include <fstream>
#include <set>
#include <sstream>

namespace sonoloc {

using nlohmann::json;

const PoolShape& ShapePool::find(const std::string& id) const {
  for (const auto& s : shapes)
    if (s.id == id) return s;
  throw NotFoundError("shape id '" + id + "' not in pool");
}

json to_json(const Point2& p) { return json::array({p.x(), p.y()}); }
json to_json(const Point3& p) { return json::array({p.x(), p.y(), p.z()}); }

Point2 point2_from_json(const json& j) {
  if (!j.is_array() || j.size() != 2) throw ParseError("expected [x, y]");
  return {j[0].get<double>(), j[1].get<double>()};
}

Point3 point3_from_json(const json& j) {
  if (!j.is_array() || j.size() != 3) throw ParseError("expected [x, y, z]");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

json pool_to_json(const ShapePool& pool) {
  json shapes = json::array();
  for (const auto& s : pool.shapes) {
    json verts = json::array();
    for (const auto& v : s.shape.vertices()) verts.push_back(to_json(v));
    shapes.push_back({{"id", s.id},
                      {"vertices_mm", verts},
                      {"seed_mm", to_json(s.seed.position)},
                      {"seed_radius_mm", s.seed.radius_mm}});
  }
  json doc = {{"shapes", shapes}};
  if (pool.generation_seed) doc["generation_seed"] = *pool.generation_seed;
  return doc;
}

ShapePool pool_from_json(const json& doc) {
  try {
    ShapePool pool;
    if (doc.contains("generation_seed"))
      pool.generation_seed = doc.at("generation_seed").get<std::uint64_t>();
    std::set<std::string> ids;
    for (const auto& js : doc.at("shapes")) {
      std::vector<Point2> verts;
      for (const auto& v : js.at("vertices_mm")) verts.push_back(point2_from_json(v));
      PoolShape s{js.at("id").get<std::string>(), Shape2D(std::move(verts)),
                  Seed{point2_from_json(js.at("seed_mm")), js.value("seed_radius_mm", 1.5)}};
      if (!ids.insert(s.id).second) throw ValidationError("duplicate shape id '" + s.id + "'");
      if (!(s.seed.radius_mm > 0)) throw ValidationError("seed radius must be positive");
      if (!(signed_distance(s.shape, s.seed.position) < 0))
        throw ValidationError("seed of shape '" + s.id + "' is not strictly inside");
      pool.shapes.push_back(std::move(s));
    }
    return pool;
  } catch (const json::exception& e) {
    throw ParseError(std::string("malformed pool document: ") + e.what());
  }
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("write failed for " + path.string());
}

void save_pool(const ShapePool& pool, const std::filesystem::path& path) {
  write_text_file(path, pool_to_json(pool).dump(2) + "\n");
}

ShapePool load_pool(const std::filesystem::path& path) {
  const std::string text = read_text_file(path);
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("pool file is not JSON: ") + e.what());
  }
  return pool_from_json(doc);
}

SurfaceMesh parse_obj(const std::string& text) {
  SurfaceMesh mesh;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::istringstream ls(line);
    std::string tag;
    if (!(ls >> tag) || tag[0] == '#') continue;
    if (tag == "v") {
      double x, y, z;
      if (!(ls >> x >> y >> z)) throw ParseError("bad vertex", lineno);
      mesh.vertices.emplace_back(x, y, z);
    } else if (tag == "f") {
      std::vector<int> idx;
      std::string tok;
      while (ls >> tok) {
        int i = 0;
        try {
          i = std::stoi(tok.substr(0, tok.find('/')));
        } catch (const std::exception&) {
          throw ParseError("bad face index '" + tok + "'", lineno);
        }
        if (i == 0) throw ParseError("face index 0", lineno);
        idx.push_back(i > 0 ? i - 1 : static_cast<int>(mesh.vertices.size()) + i);
      }
      if (idx.size() < 3) throw ParseError("face needs 3 indices", lineno);
      for (std::size_t k = 1; k + 1 < idx.size(); ++k)
        mesh.triangles.push_back({idx[0], idx[k], idx[k + 1]});
    }
  }
  mesh.validate();
  return mesh;
}

SurfaceMesh load_obj(const std::filesystem::path& path) { return parse_obj(read_text_file(path)); }

}  // namespace sonoloc
