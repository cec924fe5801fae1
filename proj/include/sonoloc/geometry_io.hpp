#pragma once

#include "sonoloc/geometry.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace sonoloc {

struct PoolShape {
  std::string id;
  Shape2D shape;
  Seed seed;

  Scene scene() const { return Scene{shape, seed}; }
};

struct ShapePool {
  std::vector<PoolShape> shapes;
  std::optional<std::uint64_t> generation_seed;

  const PoolShape& find(const std::string& id) const;  // NotFoundError
};

// Pool document: {"shapes":[{"id","vertices_mm":[[x,y],...],"seed_mm":[x,y],
// "seed_radius_mm"}], "generation_seed"?}
nlohmann::json pool_to_json(const ShapePool& pool);
ShapePool pool_from_json(const nlohmann::json& doc);  // validates shapes and seeds
void save_pool(const ShapePool& pool, const std::filesystem::path& path);
ShapePool load_pool(const std::filesystem::path& path);

// OBJ subset: "v x y z" and "f i j k ..." (1-based, negative = relative,
// slash suffixes ignored). Polygons are fan-triangulated.
SurfaceMesh parse_obj(const std::string& text);
SurfaceMesh load_obj(const std::filesystem::path& path);

nlohmann::json to_json(const Point2& p);
nlohmann::json to_json(const Point3& p);
Point2 point2_from_json(const nlohmann::json& j);
Point3 point3_from_json(const nlohmann::json& j);

std::string read_text_file(const std::filesystem::path& path);               // IoError
void write_text_file(const std::filesystem::path& path, const std::string& text);  // IoError

}  // namespace sonoloc
