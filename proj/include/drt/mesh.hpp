#pragma once

#include <cstdint>
#include <fstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "drt/sdf.hpp"

namespace drt {

// Extracts the zero level set on a regular grid by splitting each cell into
// six tetrahedra and interpolating sign changes along their edges — only
// unambiguous simplex cases, no lookup-table disambiguation. Inspection
// quality; not used by training.
struct MeshResult {
  std::vector<Vec3d> vertices;
  std::vector<std::array<int, 3>> triangles;
};

inline MeshResult extract_mesh(const SdfModel& model, const double* params,
                               const Vec3d& lo, const Vec3d& hi, int resolution) {
  check_config(resolution >= 2, "mesh grid resolution must be at least 2");
  check_config(hi.x > lo.x && hi.y > lo.y && hi.z > lo.z, "mesh bounds must be a proper box");
  const int n = resolution;
  const int np = n + 1;
  auto cache = model.prepare(params);

  auto corner_pos = [&](int ix, int iy, int iz) {
    return Vec3d{lo.x + (hi.x - lo.x) * ix / n, lo.y + (hi.y - lo.y) * iy / n,
                 lo.z + (hi.z - lo.z) * iz / n};
  };
  std::vector<double> field(size_t(np) * np * np);
  auto fid = [&](int ix, int iy, int iz) {
    return (size_t(ix) * np + iy) * np + iz;
  };
  for (int ix = 0; ix < np; ++ix)
    for (int iy = 0; iy < np; ++iy)
      for (int iz = 0; iz < np; ++iz)
        field[fid(ix, iy, iz)] = model.evaluate_cached(cache, params, corner_pos(ix, iy, iz));

  // Cube corners in bit order (x, y, z); six tetrahedra sharing diagonal 0-6.
  static const int kCorner[8][3] = {{0, 0, 0}, {1, 0, 0}, {1, 1, 0}, {0, 1, 0},
                                    {0, 0, 1}, {1, 0, 1}, {1, 1, 1}, {0, 1, 1}};
  static const int kTets[6][4] = {{0, 1, 2, 6}, {0, 2, 3, 6}, {0, 3, 7, 6},
                                  {0, 7, 4, 6}, {0, 4, 5, 6}, {0, 5, 1, 6}};

  MeshResult mesh;
  std::unordered_map<uint64_t, int> edge_vertex;

  auto global_id = [&](int ix, int iy, int iz) {
    return uint64_t((size_t(ix) * np + iy) * np + iz);
  };
  auto edge_key = [](uint64_t a, uint64_t b) {
    if (a > b) std::swap(a, b);
    return (a << 22) | b;
  };

  auto vertex_on_edge = [&](uint64_t ga, uint64_t gb, const Vec3d& pa, const Vec3d& pb,
                            double va, double vb) {
    uint64_t key = edge_key(ga, gb);
    auto it = edge_vertex.find(key);
    if (it != edge_vertex.end()) return it->second;
    double denom = va - vb;
    double u = std::fabs(denom) < 1e-300 ? 0.5 : va / denom;
    u = clamp01(u);
    mesh.vertices.push_back(pa + (pb - pa) * u);
    int idx = int(mesh.vertices.size()) - 1;
    edge_vertex.emplace(key, idx);
    return idx;
  };

  for (int ix = 0; ix < n; ++ix) {
    for (int iy = 0; iy < n; ++iy) {
      for (int iz = 0; iz < n; ++iz) {
        uint64_t gid[8];
        Vec3d pos[8];
        double val[8];
        for (int c = 0; c < 8; ++c) {
          int cx = ix + kCorner[c][0], cy = iy + kCorner[c][1], cz = iz + kCorner[c][2];
          gid[c] = global_id(cx, cy, cz);
          pos[c] = corner_pos(cx, cy, cz);
          val[c] = field[fid(cx, cy, cz)];
        }
        for (const auto& tet : kTets) {
          int inside[4], outside[4];
          int ni = 0, no = 0;
          for (int v = 0; v < 4; ++v) {
            if (val[tet[v]] < 0.0)
              inside[ni++] = tet[v];
            else
              outside[no++] = tet[v];
          }
          if (ni == 0 || ni == 4) continue;

          auto emit = [&](int a, int b, int c) {
            // Orient so the face normal points from the interior outward.
            const Vec3d& pa = mesh.vertices[size_t(a)];
            const Vec3d& pb = mesh.vertices[size_t(b)];
            const Vec3d& pc = mesh.vertices[size_t(c)];
            Vec3d fn = cross(pb - pa, pc - pa);
            Vec3d dir{0, 0, 0};
            for (int v = 0; v < no; ++v) dir += pos[outside[v]] * (1.0 / no);
            for (int v = 0; v < ni; ++v) dir += pos[inside[v]] * (-1.0 / ni);
            if (dot(fn, dir) < 0.0) std::swap(b, c);
            mesh.triangles.push_back({a, b, c});
          };
          auto ev = [&](int i, int o) {
            return vertex_on_edge(gid[i], gid[o], pos[i], pos[o], val[i], val[o]);
          };

          if (ni == 1) {
            emit(ev(inside[0], outside[0]), ev(inside[0], outside[1]),
                 ev(inside[0], outside[2]));
          } else if (ni == 3) {
            emit(ev(inside[0], outside[0]), ev(inside[1], outside[0]),
                 ev(inside[2], outside[0]));
          } else {  // ni == 2: quad split into two triangles
            int a = ev(inside[0], outside[0]);
            int b = ev(inside[0], outside[1]);
            int c = ev(inside[1], outside[1]);
            int d = ev(inside[1], outside[0]);
            emit(a, b, c);
            emit(a, c, d);
          }
        }
      }
    }
  }
  return mesh;
}

inline void write_obj(const MeshResult& mesh, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open mesh file for writing: " + path);
  out << "# zero level set export\n";
  for (const auto& v : mesh.vertices)
    out << "v " << v.x << " " << v.y << " " << v.z << "\n";
  for (const auto& t : mesh.triangles)
    out << "f " << t[0] + 1 << " " << t[1] + 1 << " " << t[2] + 1 << "\n";
  if (!out) throw IoError("short write to mesh file: " + path);
}

}  // namespace drt
