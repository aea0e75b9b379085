#pragma once

// Deterministic synthetic scenes: ray-cast Lambertian renders of a textured
// ground plane plus axis-aligned boxes, exact depth and occlusion masks from
// the analytic geometry, a "night" photometric degradation, and dataset
// generation with per-scene manifests.
//
// File formats: images as binary PPM (P6, 8-bit) for display plus tensor
// binary (.dft) for training; depth and occlusion masks as tensor binary;
// manifests as line-oriented key=value text.

#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "selfdepth/camera.hpp"
#include "selfdepth/tensor.hpp"

namespace selfdepth {

// ---------------------------------------------------------------------------
// Scene description

struct Box {
  Vec3 lo, hi;  // axis-aligned corners, world coordinates
};

struct LightBlob {
  double u = 0, v = 0;   // image coordinates
  double radius = 8;     // pixels
  double intensity = 0;  // additive peak
};

struct NightParams {
  double gamma = 3.0;     // power-law darkening, must be >= 1
  double noise_sigma = 0.03;
  int blob_count = 4;
  double blob_radius_min = 5, blob_radius_max = 13;
  double blob_intensity_min = 0.25, blob_intensity_max = 0.55;
};

/// Camera-to-world transform for one frame (world units, no 0.001 scale).
struct FramePose {
  Vec3 axis_angle;
  Vec3 translation;
  Mat3 rotation() const { return rodrigues(axis_angle); }
};

enum class Domain { kDay, kNight };

inline const char* domain_name(Domain d) {
  return d == Domain::kDay ? "day" : "night";
}

struct SceneSpec {
  std::string name;
  double ground_y = 1.2;           // horizontal plane y = ground_y
  std::vector<Box> boxes;
  std::uint64_t texture_seed = 1;
  double texture_base_freq = 0.9;
  int texture_octaves = 3;
  double texture_contrast = 0.9;
  std::vector<FramePose> trajectory;  // camera-to-world per frame
  Intrinsics intrinsics;
  int height = 64, width = 96;
  Domain domain = Domain::kDay;
  NightParams night;
  std::uint64_t noise_seed = 7;  // night noise / blob placement
};

// ---------------------------------------------------------------------------
// Procedural texture: multi-octave trilinear value noise on a 3-D lattice.

namespace detail {
inline double lattice_value(std::int64_t x, std::int64_t y, std::int64_t z,
                            std::uint64_t seed) {
  std::uint64_t h = seed;
  h ^= static_cast<std::uint64_t>(x) * 0x9e3779b97f4a7c15ULL;
  h ^= static_cast<std::uint64_t>(y) * 0xc2b2ae3d27d4eb4fULL;
  h ^= static_cast<std::uint64_t>(z) * 0x165667b19e3779f9ULL;
  h = (h ^ (h >> 30)) * 0xbf58476d1ce4e5b9ULL;
  h = (h ^ (h >> 27)) * 0x94d049bb133111ebULL;
  h ^= h >> 31;
  return static_cast<double>(h >> 11) * 0x1.0p-53;
}

inline double value_noise(const Vec3& p, std::uint64_t seed) {
  const double fx = std::floor(p.x), fy = std::floor(p.y), fz = std::floor(p.z);
  const auto x0 = static_cast<std::int64_t>(fx);
  const auto y0 = static_cast<std::int64_t>(fy);
  const auto z0 = static_cast<std::int64_t>(fz);
  const double tx = p.x - fx, ty = p.y - fy, tz = p.z - fz;
  double acc = 0;
  for (int dz = 0; dz <= 1; ++dz)
    for (int dy = 0; dy <= 1; ++dy)
      for (int dx = 0; dx <= 1; ++dx) {
        const double w = (dx ? tx : 1 - tx) * (dy ? ty : 1 - ty) * (dz ? tz : 1 - tz);
        acc += w * lattice_value(x0 + dx, y0 + dy, z0 + dz, seed);
      }
  return acc;
}
}  // namespace detail

/// Multi-octave world-space texture in [0,1]; channel selects a decorrelated
/// noise field so renders are RGB.
inline double scene_texture(const SceneSpec& spec, const Vec3& p, int channel) {
  double value = 0, amp = 1, norm = 0, freq = spec.texture_base_freq;
  const std::uint64_t ch_seed =
      derive_seed(spec.texture_seed, 977 + static_cast<std::uint64_t>(channel));
  for (int o = 0; o < spec.texture_octaves; ++o) {
    value += amp * detail::value_noise(p * freq, derive_seed(ch_seed, o));
    norm += amp;
    amp *= 0.55;
    freq *= 2.0;
  }
  value /= norm;
  double out = 0.5 + (value - 0.5) * spec.texture_contrast;
  return std::clamp(out, 0.02, 0.98);
}

// ---------------------------------------------------------------------------
// Ray casting

namespace detail {

struct RayHit {
  double t = -1;  // parameter along the (unnormalized, z=1 in camera) ray
  bool hit = false;
};

inline RayHit intersect_ground(const Vec3& origin, const Vec3& dir, double y) {
  RayHit h;
  if (std::fabs(dir.y) < 1e-12) return h;
  const double t = (y - origin.y) / dir.y;
  if (t > 1e-9) {
    h.t = t;
    h.hit = true;
  }
  return h;
}

inline RayHit intersect_box(const Vec3& origin, const Vec3& dir, const Box& b) {
  double t0 = -1e300, t1 = 1e300;
  const double o[3] = {origin.x, origin.y, origin.z};
  const double d[3] = {dir.x, dir.y, dir.z};
  const double lo[3] = {b.lo.x, b.lo.y, b.lo.z};
  const double hi[3] = {b.hi.x, b.hi.y, b.hi.z};
  for (int i = 0; i < 3; ++i) {
    if (std::fabs(d[i]) < 1e-12) {
      if (o[i] < lo[i] || o[i] > hi[i]) return {};
      continue;
    }
    double a = (lo[i] - o[i]) / d[i];
    double c = (hi[i] - o[i]) / d[i];
    if (a > c) std::swap(a, c);
    t0 = std::max(t0, a);
    t1 = std::min(t1, c);
  }
  RayHit h;
  if (t0 <= t1 && t1 > 1e-9) {
    h.t = t0 > 1e-9 ? t0 : t1;
    h.hit = true;
  }
  return h;
}

/// Nearest surface along origin + t*dir; t is z-depth when dir has unit z in
/// the camera frame.
inline RayHit cast_ray(const SceneSpec& spec, const Vec3& origin, const Vec3& dir) {
  RayHit best;
  RayHit g = intersect_ground(origin, dir, spec.ground_y);
  if (g.hit) best = g;
  for (const Box& b : spec.boxes) {
    RayHit h = intersect_box(origin, dir, b);
    if (h.hit && (!best.hit || h.t < best.t)) best = h;
  }
  return best;
}

}  // namespace detail

struct RenderResult {
  Tensor image;   // [1,3,H,W] in [0,1]
  DepthMap depth; // [1,1,H,W]
};

/// Ray-cast Lambertian render. Depth is the z-coordinate of the hit in the
/// camera frame; rays that escape all geometry get far-plane depth 100 and a
/// constant sky color. Deterministic for a fixed spec.
inline RenderResult render(const SceneSpec& spec, int frame) {
  if (frame < 0 || frame >= static_cast<int>(spec.trajectory.size()))
    throw DomainError("render: frame outside trajectory");
  const int h = spec.height, w = spec.width;
  const Intrinsics& k = spec.intrinsics;
  const FramePose& cam = spec.trajectory[frame];
  const Mat3 r = cam.rotation();
  Tensor img = Tensor::zeros({1, 3, h, w});
  Tensor dep = Tensor::zeros({1, 1, h, w});
  double* pi = img.mutable_data();
  double* pd = dep.mutable_data();
  const double sky[3] = {0.55, 0.62, 0.72};
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const Vec3 dir_cam{(x - k.cx) / k.fx, (y - k.cy) / k.fy, 1.0};
      const Vec3 dir = r * dir_cam;
      detail::RayHit hit = detail::cast_ray(spec, cam.translation, dir);
      const std::int64_t i = static_cast<std::int64_t>(y) * w + x;
      if (hit.hit && hit.t < kMaxDepth) {
        const Vec3 p = cam.translation + dir * hit.t;
        pd[i] = hit.t;
        for (int c = 0; c < 3; ++c)
          pi[c * h * w + i] = scene_texture(spec, p, c);
      } else {
        pd[i] = kMaxDepth;
        for (int c = 0; c < 3; ++c) pi[c * h * w + i] = sky[c];
      }
    }
  return {img, DepthMap{dep}};
}

/// Exact occlusion mask: pixel p of the target frame is flagged (1) iff a
/// nearer surface intersects the ray from the support camera toward p's 3-D
/// point, or that point lies behind the support camera.
inline Tensor occlusion_mask(const SceneSpec& spec, int target_frame,
                             int support_frame) {
  const int h = spec.height, w = spec.width;
  const Intrinsics& k = spec.intrinsics;
  const FramePose& tc = spec.trajectory[target_frame];
  const FramePose& sc = spec.trajectory[support_frame];
  const Mat3 rt = tc.rotation();
  const Mat3 rs_inv = sc.rotation().transposed();
  Tensor mask = Tensor::zeros({1, 1, h, w});
  double* pm = mask.mutable_data();
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const std::int64_t i = static_cast<std::int64_t>(y) * w + x;
      const Vec3 dir_cam{(x - k.cx) / k.fx, (y - k.cy) / k.fy, 1.0};
      detail::RayHit hit = detail::cast_ray(spec, tc.translation, rt * dir_cam);
      if (!hit.hit || hit.t >= kMaxDepth) continue;  // sky: never flagged
      const Vec3 p = tc.translation + (rt * dir_cam) * hit.t;
      const Vec3 p_s = rs_inv * (p - sc.translation);  // support camera frame
      if (p_s.z <= 0) {
        pm[i] = 1.0;
        continue;
      }
      const Vec3 dir_s{p_s.x / p_s.z, p_s.y / p_s.z, 1.0};
      detail::RayHit shit = detail::cast_ray(spec, sc.translation,
                                             sc.rotation() * dir_s);
      if (shit.hit && shit.t < p_s.z - 1e-6) pm[i] = 1.0;
    }
  return mask;
}

// ---------------------------------------------------------------------------
// Night degradation

/// out = clip(image^gamma + blobs + noise, 0, 1). Blob placement and sensor
/// noise are seeded and deterministic.
inline Tensor degrade_night(const Tensor& image, const NightParams& params,
                            std::uint64_t seed) {
  if (params.gamma < 1.0)
    throw ConfigError("degrade_night: gamma must be >= 1");
  const int h = image.dim(2), w = image.dim(3);
  const double* pi = image.data();
  for (std::int64_t i = 0; i < image.size(); ++i)
    if (pi[i] < 0 || pi[i] > 1)
      throw DomainError("degrade_night: image values outside [0,1]");

  Rng rng(derive_seed(seed, 5001));
  std::vector<LightBlob> blobs(static_cast<std::size_t>(params.blob_count));
  for (auto& b : blobs) {
    b.u = rng.uniform(0, w - 1);
    b.v = rng.uniform(0, h - 1);
    b.radius = rng.uniform(params.blob_radius_min, params.blob_radius_max);
    b.intensity = rng.uniform(params.blob_intensity_min, params.blob_intensity_max);
  }
  Tensor out = Tensor::zeros(image.shape());
  double* po = out.mutable_data();
  Rng noise(derive_seed(seed, 5002));
  const std::int64_t hw = static_cast<std::int64_t>(h) * w;
  for (int c = 0; c < image.dim(1); ++c)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        const std::int64_t i = c * hw + y * static_cast<std::int64_t>(w) + x;
        double v = std::pow(pi[i], params.gamma);
        for (const auto& b : blobs) {
          const double du = x - b.u, dv = y - b.v;
          v += b.intensity *
               std::exp(-(du * du + dv * dv) / (2 * b.radius * b.radius));
        }
        if (params.noise_sigma > 0) v += params.noise_sigma * noise.normal();
        po[i] = std::clamp(v, 0.0, 1.0);
      }
  return out;
}

/// Final frame for the spec's domain: raw render for day, degraded for night.
/// Geometry (the depth map) is shared between the domain twins.
inline RenderResult render_frame(const SceneSpec& spec, int frame) {
  RenderResult r = render(spec, frame);
  if (spec.domain == Domain::kNight)
    r.image = degrade_night(r.image, spec.night,
                            derive_seed(spec.noise_seed, 31 + frame));
  return r;
}

// ---------------------------------------------------------------------------
// PPM I/O (P6, 8-bit)

inline void write_ppm(const Tensor& image, const std::string& path) {
  if (image.rank() != 4 || image.dim(0) != 1 || image.dim(1) != 3)
    throw ShapeError("write_ppm expects [1,3,H,W]");
  const int h = image.dim(2), w = image.dim(3);
  std::ofstream f(path, std::ios::binary);
  if (!f) throw EvalError("cannot open for write: " + path);
  f << "P6\n" << w << " " << h << "\n255\n";
  const double* p = image.data();
  const std::int64_t hw = static_cast<std::int64_t>(h) * w;
  for (std::int64_t i = 0; i < hw; ++i)
    for (int c = 0; c < 3; ++c) {
      const double v = std::clamp(p[c * hw + i], 0.0, 1.0);
      f.put(static_cast<char>(std::lround(v * 255.0)));
    }
}

/// Grayscale visualization written as P6 with equal channels.
inline void write_gray_ppm(const Tensor& map, const std::string& path) {
  if (map.rank() != 4 || map.dim(1) != 1) throw ShapeError("write_gray_ppm expects [1,1,H,W]");
  const int h = map.dim(2), w = map.dim(3);
  double lo = map.at(0), hi = map.at(0);
  for (int i = 0; i < map.size(); ++i) {
    lo = std::min(lo, map.at(i));
    hi = std::max(hi, map.at(i));
  }
  const double scale = hi > lo ? 1.0 / (hi - lo) : 0.0;
  std::ofstream f(path, std::ios::binary);
  if (!f) throw EvalError("cannot open for write: " + path);
  f << "P6\n" << w << " " << h << "\n255\n";
  for (int i = 0; i < map.size(); ++i) {
    const auto byte = static_cast<char>(
        std::lround(std::clamp((map.at(i) - lo) * scale, 0.0, 1.0) * 255.0));
    f.put(byte);
    f.put(byte);
    f.put(byte);
  }
}

// ---------------------------------------------------------------------------
// Manifests: line-oriented key=value records

using KeyValueMap = std::map<std::string, std::string>;

inline void write_manifest(const KeyValueMap& kv, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw EvalError("cannot open for write: " + path);
  for (const auto& [k, v] : kv) f << k << "=" << v << "\n";
}

inline KeyValueMap read_manifest(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw EvalError("cannot open manifest: " + path);
  KeyValueMap kv;
  std::string line;
  while (std::getline(f, line)) {
    if (line.empty() || line[0] == '#') continue;
    auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return kv;
}

namespace detail {
inline std::string vec3_str(const Vec3& v) {
  std::ostringstream os;
  os.precision(17);
  os << v.x << " " << v.y << " " << v.z;
  return os.str();
}
inline Vec3 vec3_parse(const std::string& s) {
  std::istringstream is(s);
  Vec3 v;
  is >> v.x >> v.y >> v.z;
  if (!is) throw EvalError("bad vec3 in manifest: " + s);
  return v;
}
}  // namespace detail

// ---------------------------------------------------------------------------
// Scene generation

/// Procedural scene family: textured ground plane, a far wall, and a few
/// boxes, with a mostly-forward trajectory. Translation magnitudes produce
/// roughly 2-10 px correspondence shifts at 64x96.
inline SceneSpec make_scene_spec(std::uint64_t seed, Domain domain,
                                 int height = 64, int width = 96,
                                 int frames = 5) {
  Rng rng(derive_seed(seed, 601));
  SceneSpec spec;
  spec.height = height;
  spec.width = width;
  spec.domain = domain;
  spec.texture_seed = derive_seed(seed, 602);
  spec.noise_seed = derive_seed(seed, 603);
  spec.intrinsics = {0.85 * width, 0.85 * width, (width - 1) / 2.0,
                     (height - 1) / 2.0};
  spec.ground_y = 1.2;
  // far wall keeps every ray on textured geometry
  spec.boxes.push_back(Box{{-40, -30, 17.0}, {40, 1.3, 18.0}});
  const int n_boxes = 2 + rng.uniform_int(3);
  for (int b = 0; b < n_boxes; ++b) {
    const double cx = rng.uniform(-3.5, 3.5);
    const double cz = rng.uniform(4.0, 13.0);
    const double sx = rng.uniform(0.5, 1.4);
    const double sy = rng.uniform(0.6, 1.8);
    const double sz = rng.uniform(0.5, 1.4);
    spec.boxes.push_back(
        Box{{cx - sx, spec.ground_y - 2 * sy, cz - sz}, {cx + sx, spec.ground_y, cz + sz}});
  }
  Vec3 pos{rng.uniform(-0.3, 0.3), 0.0, rng.uniform(-0.2, 0.2)};
  double yaw = rng.uniform(-0.02, 0.02);
  for (int f = 0; f < frames; ++f) {
    spec.trajectory.push_back(FramePose{{0, yaw, 0}, pos});
    pos = pos + Vec3{rng.uniform(-0.10, 0.10), rng.uniform(-0.02, 0.02),
                     rng.uniform(0.28, 0.42)};
    yaw += rng.uniform(-0.012, 0.012);
  }
  return spec;
}

/// Static camera and scene: every frame identical (automask degenerate case).
inline SceneSpec make_static_scene_spec(std::uint64_t seed, Domain domain = Domain::kDay) {
  SceneSpec spec = make_scene_spec(seed, domain);
  for (auto& f : spec.trajectory) f = spec.trajectory[0];
  return spec;
}

/// Ground-truth relative pose between two frames: maps target-camera points
/// into the support camera, in the network's representation (axis-angle plus
/// pre-scale translation).
inline Pose relative_pose(const SceneSpec& spec, int target_frame,
                          int support_frame) {
  const FramePose& t = spec.trajectory[target_frame];
  const FramePose& s = spec.trajectory[support_frame];
  const Mat3 rs_inv = s.rotation().transposed();
  const Mat3 r_rel = rs_inv * t.rotation();
  const Vec3 t_rel = rs_inv * (t.translation - s.translation);
  return Pose::from_effective(axis_angle_from_matrix(r_rel), t_rel);
}

// ---------------------------------------------------------------------------
// Datasets on disk

struct SceneSample {
  Tensor target, prev, next;       // [1,3,H,W]
  DepthMap gt_depth;               // target frame
  Pose pose_prev, pose_next;       // target -> support, ground truth
  Intrinsics intrinsics;
  Tensor occ_prev, occ_next;       // [1,1,H,W], 1 = occluded in that support
  Domain domain = Domain::kDay;
};

namespace detail {
inline std::string frame_tag(int f) {
  char buf[8];
  std::snprintf(buf, sizeof(buf), "%03d", f);
  return buf;
}
}  // namespace detail

/// Writes one scene directory: per-frame PPM + tensor images, depth maps,
/// occlusion masks for interior frames, and the scene manifest.
inline void write_scene(const SceneSpec& spec, const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  KeyValueMap kv;
  kv["scene"] = spec.name;
  kv["domain"] = domain_name(spec.domain);
  kv["height"] = std::to_string(spec.height);
  kv["width"] = std::to_string(spec.width);
  kv["frames"] = std::to_string(spec.trajectory.size());
  {
    std::ostringstream os;
    os.precision(17);
    os << spec.intrinsics.fx << " " << spec.intrinsics.fy << " "
       << spec.intrinsics.cx << " " << spec.intrinsics.cy;
    kv["intrinsics"] = os.str();
  }
  const int n = static_cast<int>(spec.trajectory.size());
  for (int f = 0; f < n; ++f) {
    kv["frame." + std::to_string(f) + ".c2w_aa"] =
        detail::vec3_str(spec.trajectory[f].axis_angle);
    kv["frame." + std::to_string(f) + ".c2w_t"] =
        detail::vec3_str(spec.trajectory[f].translation);
    RenderResult r = render_frame(spec, f);
    const std::string tag = detail::frame_tag(f);
    write_ppm(r.image, dir + "/image_" + tag + ".ppm");
    save_tensor(r.image, dir + "/image_" + tag + ".dft");
    save_tensor(r.depth.values, dir + "/depth_" + tag + ".dft");
    if (f > 0 && f + 1 < n) {
      save_tensor(occlusion_mask(spec, f, f - 1), dir + "/occ_prev_" + tag + ".dft");
      save_tensor(occlusion_mask(spec, f, f + 1), dir + "/occ_next_" + tag + ".dft");
    }
  }
  write_manifest(kv, dir + "/manifest.txt");
}

struct SceneOnDisk {
  std::string dir;
  std::string name;
  Domain domain = Domain::kDay;
  int height = 0, width = 0, frames = 0;
  Intrinsics intrinsics;
  std::vector<FramePose> trajectory;
};

inline SceneOnDisk read_scene_dir(const std::string& dir) {
  KeyValueMap kv = read_manifest(dir + "/manifest.txt");
  SceneOnDisk s;
  s.dir = dir;
  s.name = kv.at("scene");
  s.domain = kv.at("domain") == "night" ? Domain::kNight : Domain::kDay;
  s.height = std::stoi(kv.at("height"));
  s.width = std::stoi(kv.at("width"));
  s.frames = std::stoi(kv.at("frames"));
  {
    std::istringstream is(kv.at("intrinsics"));
    is >> s.intrinsics.fx >> s.intrinsics.fy >> s.intrinsics.cx >> s.intrinsics.cy;
  }
  for (int f = 0; f < s.frames; ++f) {
    FramePose p;
    p.axis_angle = detail::vec3_parse(kv.at("frame." + std::to_string(f) + ".c2w_aa"));
    p.translation = detail::vec3_parse(kv.at("frame." + std::to_string(f) + ".c2w_t"));
    s.trajectory.push_back(p);
  }
  return s;
}

inline Pose relative_pose(const SceneOnDisk& scene, int target_frame,
                          int support_frame) {
  const FramePose& t = scene.trajectory[target_frame];
  const FramePose& s = scene.trajectory[support_frame];
  const Mat3 rs_inv = s.rotation().transposed();
  const Mat3 r_rel = rs_inv * t.rotation();
  const Vec3 t_rel = rs_inv * (t.translation - s.translation);
  return Pose::from_effective(axis_angle_from_matrix(r_rel), t_rel);
}

/// Loads the training tuple centered on interior frame t.
inline SceneSample load_sample(const SceneOnDisk& scene, int t) {
  if (t <= 0 || t + 1 >= scene.frames)
    throw DomainError("load_sample: frame must be interior");
  SceneSample s;
  const std::string tag = detail::frame_tag(t);
  s.target = load_tensor(scene.dir + "/image_" + tag + ".dft");
  s.prev = load_tensor(scene.dir + "/image_" + detail::frame_tag(t - 1) + ".dft");
  s.next = load_tensor(scene.dir + "/image_" + detail::frame_tag(t + 1) + ".dft");
  s.gt_depth = DepthMap{load_tensor(scene.dir + "/depth_" + tag + ".dft")};
  s.occ_prev = load_tensor(scene.dir + "/occ_prev_" + tag + ".dft");
  s.occ_next = load_tensor(scene.dir + "/occ_next_" + tag + ".dft");
  s.pose_prev = relative_pose(scene, t, t - 1);
  s.pose_next = relative_pose(scene, t, t + 1);
  s.intrinsics = scene.intrinsics;
  s.domain = scene.domain;
  return s;
}

struct DatasetLayout {
  std::vector<std::string> train_dirs;  // relative to root
  std::vector<std::string> val_dirs;
};

/// Generates day+night twins for `train_scenes` training and `val_scenes`
/// validation scenes with disjoint seed streams; refuses to touch an existing
/// root unless `overwrite` is set. The night twin shares the day twin's
/// geometry, so its depth files are byte-identical.
inline DatasetLayout generate_dataset(const std::string& root,
                                      std::uint64_t seed, int train_scenes,
                                      int val_scenes, bool overwrite,
                                      int height = 64, int width = 96,
                                      int frames = 5) {
  namespace fs = std::filesystem;
  if (fs::exists(root)) {
    if (!overwrite)
      throw ConfigError("dataset root already exists (pass overwrite): " + root);
    fs::remove_all(root);
  }
  fs::create_directories(root);
  DatasetLayout layout;
  KeyValueMap kv;
  kv["seed"] = std::to_string(seed);
  kv["height"] = std::to_string(height);
  kv["width"] = std::to_string(width);
  auto emit = [&](const std::string& split, int count, std::uint64_t stream,
                  std::vector<std::string>& dirs) {
    for (int i = 0; i < count; ++i) {
      const std::uint64_t scene_seed = derive_seed(seed, stream + i);
      for (Domain d : {Domain::kDay, Domain::kNight}) {
        SceneSpec spec = make_scene_spec(scene_seed, d, height, width, frames);
        char name[64];
        std::snprintf(name, sizeof(name), "scene_%03d_%s", i, domain_name(d));
        spec.name = name;
        const std::string rel = split + "/" + name;
        write_scene(spec, root + "/" + rel);
        dirs.push_back(rel);
        kv["scene." + rel + ".seed"] = std::to_string(scene_seed);
      }
    }
  };
  emit("train", train_scenes, 1000, layout.train_dirs);
  emit("val", val_scenes, 2000000, layout.val_dirs);
  auto join = [](const std::vector<std::string>& v) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) {
      out += v[i];
      if (i + 1 < v.size()) out += ",";
    }
    return out;
  };
  kv["train"] = join(layout.train_dirs);
  kv["val"] = join(layout.val_dirs);
  write_manifest(kv, root + "/manifest.txt");
  return layout;
}

inline DatasetLayout read_dataset_layout(const std::string& root) {
  KeyValueMap kv = read_manifest(root + "/manifest.txt");
  DatasetLayout layout;
  auto split_list = [](const std::string& s, std::vector<std::string>& out) {
    std::istringstream is(s);
    std::string item;
    while (std::getline(is, item, ','))
      if (!item.empty()) out.push_back(item);
  };
  split_list(kv.at("train"), layout.train_dirs);
  split_list(kv.at("val"), layout.val_dirs);
  return layout;
}

}  // namespace selfdepth
