#include "g4d/io.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>

#include <zlib.h>

#include <json.hpp>

static_assert(std::endian::native == std::endian::little,
              "file formats are little-endian; big-endian hosts unsupported");

namespace g4d {

using nlohmann::json;

// -------------------------------------------------------------------------
// Raw file helpers
// -------------------------------------------------------------------------

namespace {

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorKind::IoFailure, "cannot open " + path);
    std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (in.bad()) throw Error(ErrorKind::IoFailure, "read failed for " + path);
    return data;
}

void write_file(const std::string& path, const std::string& data) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorKind::IoFailure, "cannot open " + path + " for writing");
    out.write(data.data(), std::streamsize(data.size()));
    if (!out.good()) throw Error(ErrorKind::IoFailure, "write failed for " + path);
}

struct Cursor {
    const uint8_t* p;
    size_t n;
    size_t off = 0;
    std::string path;

    void require(size_t k) const {
        if (off + k > n)
            throw Error(ErrorKind::MalformedFile, path + ": truncated file");
    }
    template <typename T>
    T take() {
        require(sizeof(T));
        T v;
        std::memcpy(&v, p + off, sizeof(T));
        off += sizeof(T);
        return v;
    }
    void take_magic(const char* magic) {
        require(4);
        if (std::memcmp(p + off, magic, 4) != 0)
            throw Error(ErrorKind::MalformedFile, path + ": bad magic, want " + magic);
        off += 4;
    }
    void done() const {
        if (off != n)
            throw Error(ErrorKind::MalformedFile, path + ": trailing bytes");
    }
};

struct Builder {
    std::string buf;

    template <typename T>
    void put(T v) {
        char tmp[sizeof(T)];
        std::memcpy(tmp, &v, sizeof(T));
        buf.append(tmp, sizeof(T));
    }
    void put_magic(const char* magic) { buf.append(magic, 4); }
    void put_f32(double v) { put<float>(float(v)); }
};

double take_f32(Cursor& c) { return double(c.take<float>()); }

} // namespace

// -------------------------------------------------------------------------
// Cloud format "G4DC"
// -------------------------------------------------------------------------

GaussianCloud load_cloud(const std::string& path) {
    std::string data = read_file(path);
    Cursor c{reinterpret_cast<const uint8_t*>(data.data()), data.size(), 0, path};
    c.take_magic("G4DC");
    uint32_t version = c.take<uint32_t>();
    if (version != 1)
        throw Error(ErrorKind::MalformedFile, path + ": unsupported version");
    uint64_t count = c.take<uint64_t>();
    uint8_t degree = c.take<uint8_t>();
    if (degree > 3)
        throw Error(ErrorKind::MalformedFile, path + ": sh_degree > 3");
    size_t n_sh = size_t(3) * sh_coeff_count(int(degree));
    size_t stride = (3 + 4 + 3 + 1 + n_sh) * 4;
    if (c.n - c.off != count * stride)
        throw Error(ErrorKind::MalformedFile, path + ": payload length mismatch");

    GaussianCloud cloud;
    cloud.sh_degree = int(degree);
    cloud.frame = 1;
    cloud.gaussians.resize(size_t(count));
    for (uint64_t i = 0; i < count; ++i) {
        Gaussian& g = cloud.gaussians[size_t(i)];
        std::string where = path + ": gaussian " + std::to_string(i);
        g.mu = {take_f32(c), take_f32(c), take_f32(c)};
        g.q = {take_f32(c), take_f32(c), take_f32(c), take_f32(c)};
        g.s = {take_f32(c), take_f32(c), take_f32(c)};
        g.sigma = take_f32(c);
        g.sh.resize(n_sh);
        for (size_t b = 0; b < n_sh; ++b) g.sh[b] = take_f32(c);

        bool finite = std::isfinite(g.mu.x) && std::isfinite(g.mu.y) && std::isfinite(g.mu.z) &&
                      std::isfinite(g.q.w) && std::isfinite(g.q.x) && std::isfinite(g.q.y) &&
                      std::isfinite(g.q.z) && std::isfinite(g.s.x) && std::isfinite(g.s.y) &&
                      std::isfinite(g.s.z) && std::isfinite(g.sigma);
        for (double v : g.sh) finite = finite && std::isfinite(v);
        if (!finite) throw Error(ErrorKind::InvariantViolation, where + ": non-finite field");

        double nq = g.q.norm();
        if (nq < 1e-9)
            throw Error(ErrorKind::InvariantViolation, where + ": quaternion not normalizable");
        // Values already unit within tolerance keep their bits so the
        // round-trip stays byte-identical.
        if (std::fabs(nq - 1.0) > 1e-6) g.q = g.q.normalized();

        if (!(g.s.x > 0.0 && g.s.y > 0.0 && g.s.z > 0.0))
            throw Error(ErrorKind::InvariantViolation, where + ": scale not positive");

        if (g.sigma < -1e-4 || g.sigma > 1.0 + 1e-4)
            throw Error(ErrorKind::InvariantViolation, where + ": sigma outside [0,1]");
        if (g.sigma < 0.0) g.sigma = 0.0;
        if (g.sigma > 1.0) g.sigma = 1.0;
    }
    c.done();
    return cloud;
}

void save_cloud(const GaussianCloud& cloud, const std::string& path) {
    Builder b;
    b.put_magic("G4DC");
    b.put<uint32_t>(1);
    b.put<uint64_t>(cloud.size());
    b.put<uint8_t>(uint8_t(cloud.sh_degree));
    size_t n_sh = size_t(3) * sh_coeff_count(cloud.sh_degree);
    for (const Gaussian& g : cloud.gaussians) {
        if (g.sh.size() != n_sh)
            throw Error(ErrorKind::InvariantViolation, "sh coefficient count mismatch on save");
        b.put_f32(g.mu.x); b.put_f32(g.mu.y); b.put_f32(g.mu.z);
        b.put_f32(g.q.w); b.put_f32(g.q.x); b.put_f32(g.q.y); b.put_f32(g.q.z);
        b.put_f32(g.s.x); b.put_f32(g.s.y); b.put_f32(g.s.z);
        b.put_f32(g.sigma);
        for (double v : g.sh) b.put_f32(v);
    }
    write_file(path, b.buf);
}

// -------------------------------------------------------------------------
// Deformation format "G4DF"
// -------------------------------------------------------------------------

DeformationField load_deformation(const std::string& path) {
    std::string data = read_file(path);
    Cursor c{reinterpret_cast<const uint8_t*>(data.data()), data.size(), 0, path};
    c.take_magic("G4DF");
    uint32_t version = c.take<uint32_t>();
    if (version != 1)
        throw Error(ErrorKind::MalformedFile, path + ": unsupported version");
    uint32_t n_frames = c.take<uint32_t>();
    uint64_t count = c.take<uint64_t>();
    if (n_frames < 1)
        throw Error(ErrorKind::MalformedFile, path + ": n_frames < 1");
    size_t stride = (3 + 4 + 3) * 4;
    if (c.n - c.off != uint64_t(n_frames) * count * stride)
        throw Error(ErrorKind::MalformedFile, path + ": payload length mismatch");

    DeformationField field;
    field.kind = MotionKind::Tabulated;
    field.n_frames = int(n_frames);
    field.frames.resize(n_frames);
    for (uint32_t t = 0; t < n_frames; ++t) {
        FrameDelta& d = field.frames[t];
        d.dmu.resize(size_t(count));
        d.dq.resize(size_t(count));
        d.ds.resize(size_t(count));
        for (uint64_t i = 0; i < count; ++i) {
            d.dmu[size_t(i)] = {take_f32(c), take_f32(c), take_f32(c)};
            d.dq[size_t(i)] = {take_f32(c), take_f32(c), take_f32(c), take_f32(c)};
            d.ds[size_t(i)] = {take_f32(c), take_f32(c), take_f32(c)};
            const Vec3& m = d.dmu[size_t(i)];
            const Quat& q = d.dq[size_t(i)];
            const Vec3& s = d.ds[size_t(i)];
            bool finite = std::isfinite(m.x) && std::isfinite(m.y) && std::isfinite(m.z) &&
                          std::isfinite(q.w) && std::isfinite(q.x) && std::isfinite(q.y) &&
                          std::isfinite(q.z) && std::isfinite(s.x) && std::isfinite(s.y) &&
                          std::isfinite(s.z);
            if (!finite)
                throw Error(ErrorKind::InvariantViolation,
                            path + ": non-finite delta at frame " + std::to_string(t + 1));
            if (t == 0) {
                bool zero = m.x == 0 && m.y == 0 && m.z == 0 && q.w == 0 && q.x == 0 &&
                            q.y == 0 && q.z == 0 && s.x == 0 && s.y == 0 && s.z == 0;
                if (!zero)
                    throw Error(ErrorKind::InvariantViolation,
                                path + ": frame-1 deltas must be exactly zero");
            }
        }
    }
    c.done();
    return field;
}

void save_deformation(const DeformationField& field, const GaussianCloud& cloud,
                      const std::string& path) {
    DeformationField tab =
        field.kind == MotionKind::Tabulated ? field : tabulate_field(field, cloud);
    Builder b;
    b.put_magic("G4DF");
    b.put<uint32_t>(1);
    b.put<uint32_t>(uint32_t(tab.n_frames));
    b.put<uint64_t>(cloud.size());
    for (const FrameDelta& d : tab.frames) {
        if (d.dmu.size() != cloud.size())
            throw Error(ErrorKind::SizeMismatch, "deformation length != cloud length on save");
        for (size_t i = 0; i < cloud.size(); ++i) {
            b.put_f32(d.dmu[i].x); b.put_f32(d.dmu[i].y); b.put_f32(d.dmu[i].z);
            b.put_f32(d.dq[i].w); b.put_f32(d.dq[i].x); b.put_f32(d.dq[i].y); b.put_f32(d.dq[i].z);
            b.put_f32(d.ds[i].x); b.put_f32(d.ds[i].y); b.put_f32(d.ds[i].z);
        }
    }
    write_file(path, b.buf);
}

// -------------------------------------------------------------------------
// Float image format "G4DI"
// -------------------------------------------------------------------------

Image load_image_g4di(const std::string& path) {
    std::string data = read_file(path);
    Cursor c{reinterpret_cast<const uint8_t*>(data.data()), data.size(), 0, path};
    c.take_magic("G4DI");
    uint32_t version = c.take<uint32_t>();
    if (version != 1)
        throw Error(ErrorKind::MalformedFile, path + ": unsupported version");
    uint32_t h = c.take<uint32_t>();
    uint32_t w = c.take<uint32_t>();
    uint32_t ch = c.take<uint32_t>();
    if (w == 0 || h == 0 || ch == 0 || ch > 4)
        throw Error(ErrorKind::MalformedFile, path + ": bad dimensions");
    if (c.n - c.off != size_t(w) * h * ch * 4)
        throw Error(ErrorKind::MalformedFile, path + ": payload length mismatch");
    Image img{int(w), int(h), int(ch)};
    for (double& v : img.data) v = take_f32(c);
    c.done();
    return img;
}

void save_image_g4di(const Image& img, const std::string& path) {
    Builder b;
    b.put_magic("G4DI");
    b.put<uint32_t>(1);
    b.put<uint32_t>(uint32_t(img.height));
    b.put<uint32_t>(uint32_t(img.width));
    b.put<uint32_t>(uint32_t(img.channels));
    for (double v : img.data) b.put_f32(v);
    write_file(path, b.buf);
}

// -------------------------------------------------------------------------
// PNG writer (8-bit, zlib-compressed IDAT)
// -------------------------------------------------------------------------

namespace {

void put_be32(std::string& s, uint32_t v) {
    s.push_back(char((v >> 24) & 0xff));
    s.push_back(char((v >> 16) & 0xff));
    s.push_back(char((v >> 8) & 0xff));
    s.push_back(char(v & 0xff));
}

void put_chunk(std::string& out, const char* type, const std::string& payload) {
    put_be32(out, uint32_t(payload.size()));
    size_t start = out.size();
    out.append(type, 4);
    out.append(payload);
    uLong crc = crc32(0L, Z_NULL, 0);
    crc = crc32(crc, reinterpret_cast<const Bytef*>(out.data() + start), uInt(out.size() - start));
    put_be32(out, uint32_t(crc));
}

uint8_t quantize8(double v) {
    if (v < 0.0) v = 0.0;
    if (v > 1.0) v = 1.0;
    return uint8_t(std::floor(v * 255.0 + 0.5));
}

} // namespace

void save_png(const Image& img, const std::string& path) {
    if (img.channels != 1 && img.channels != 3)
        throw Error(ErrorKind::BadConfig, "png supports 1 or 3 channels");
    std::string raw;
    raw.reserve(size_t(img.height) * (size_t(img.width) * img.channels + 1));
    for (int y = 0; y < img.height; ++y) {
        raw.push_back('\0');  // filter type 0 per scanline
        for (int x = 0; x < img.width; ++x)
            for (int c = 0; c < img.channels; ++c)
                raw.push_back(char(quantize8(img.at(x, y, c))));
    }
    uLongf bound = compressBound(uLong(raw.size()));
    std::string idat(bound, '\0');
    if (compress2(reinterpret_cast<Bytef*>(idat.data()), &bound,
                  reinterpret_cast<const Bytef*>(raw.data()), uLong(raw.size()),
                  Z_BEST_COMPRESSION) != Z_OK)
        throw Error(ErrorKind::IoFailure, "zlib compression failed for " + path);
    idat.resize(bound);

    std::string out("\x89PNG\r\n\x1a\n", 8);
    std::string ihdr;
    put_be32(ihdr, uint32_t(img.width));
    put_be32(ihdr, uint32_t(img.height));
    ihdr.push_back(8);                                    // bit depth
    ihdr.push_back(img.channels == 3 ? char(2) : char(0));  // color type
    ihdr.push_back(0); ihdr.push_back(0); ihdr.push_back(0);
    put_chunk(out, "IHDR", ihdr);
    put_chunk(out, "IDAT", idat);
    put_chunk(out, "IEND", "");
    write_file(path, out);
}

// -------------------------------------------------------------------------
// JSON artifacts
// -------------------------------------------------------------------------

namespace {

json vec3_json(const Vec3& v) { return json::array({v.x, v.y, v.z}); }

Vec3 vec3_from(const json& j, const std::string& what) {
    if (!j.is_array() || j.size() != 3)
        throw Error(ErrorKind::BadConfig, what + " must be an array of 3 numbers");
    return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

json parse_json_file(const std::string& path) {
    std::string text = read_file(path);
    json j = json::parse(text, nullptr, false);
    if (j.is_discarded())
        throw Error(ErrorKind::MalformedFile, path + ": invalid JSON");
    return j;
}

} // namespace

void save_anchor_set(const AnchorSet& anchors, const std::string& path) {
    json j;
    j["anchors"] = json::array();
    for (const Vec3& p : anchors.anchors) j["anchors"].push_back(vec3_json(p));
    j["membership"] = anchors.membership;
    j["member_weights"] = anchors.member_weights;
    j["gaussian_to_anchors"] = anchors.gaussian_to_anchors;
    j["d_mean"] = anchors.d_mean;
    j["delta"] = anchors.delta;
    j["n_neighborhoods"] = anchors.n_neighborhoods;
    j["n_anchored"] = anchors.n_anchored;
    write_file(path, j.dump(2) + "\n");
}

AnchorSet load_anchor_set(const std::string& path) {
    json j = parse_json_file(path);
    AnchorSet a;
    try {
        for (const json& p : j.at("anchors")) a.anchors.push_back(vec3_from(p, "anchor"));
        a.membership = j.at("membership").get<std::vector<std::vector<int>>>();
        a.member_weights = j.at("member_weights").get<std::vector<std::vector<double>>>();
        a.gaussian_to_anchors = j.at("gaussian_to_anchors").get<std::vector<std::vector<int>>>();
        a.d_mean = j.at("d_mean").get<double>();
        a.delta = j.at("delta").get<double>();
        a.n_neighborhoods = j.at("n_neighborhoods").get<int>();
        a.n_anchored = j.at("n_anchored").get<int>();
    } catch (const json::exception& e) {
        throw Error(ErrorKind::MalformedFile, path + ": " + e.what());
    }
    return a;
}

void save_correspondence(const CorrespondenceMap& corr, const TransportPlan& plan,
                         const std::string& path) {
    json j;
    j["corr"] = corr.corr;
    j["iterations"] = plan.iterations;
    j["marginal_err"] = plan.marginal_err;
    j["converged"] = plan.converged;
    write_file(path, j.dump(2) + "\n");
}

CorrespondenceMap load_correspondence(const std::string& path) {
    json j = parse_json_file(path);
    CorrespondenceMap m;
    try {
        m.corr = j.at("corr").get<std::vector<int>>();
    } catch (const json::exception& e) {
        throw Error(ErrorKind::MalformedFile, path + ": " + e.what());
    }
    return m;
}

// -------------------------------------------------------------------------
// Session config
// -------------------------------------------------------------------------

namespace {

json camera_json(const Camera& cam) {
    json j;
    j["model"] = cam.model == CameraModel::Pinhole ? "pinhole" : "orthographic";
    j["rotation"] = std::vector<double>(cam.rot.m.begin(), cam.rot.m.end());
    j["translation"] = vec3_json(cam.trans);
    j["fx"] = cam.fx; j["fy"] = cam.fy;
    j["cx"] = cam.cx; j["cy"] = cam.cy;
    j["width"] = cam.width; j["height"] = cam.height;
    j["near"] = cam.near_clip; j["far"] = cam.far_clip;
    return j;
}

Camera camera_from(const json& j) {
    Camera cam;
    try {
        std::string model = j.at("model").get<std::string>();
        if (model == "pinhole") cam.model = CameraModel::Pinhole;
        else if (model == "orthographic") cam.model = CameraModel::Orthographic;
        else throw Error(ErrorKind::BadConfig, "unknown camera model " + model);
        auto r = j.at("rotation").get<std::vector<double>>();
        if (r.size() != 9)
            throw Error(ErrorKind::BadConfig, "camera rotation must have 9 entries");
        std::copy(r.begin(), r.end(), cam.rot.m.begin());
        cam.trans = vec3_from(j.at("translation"), "camera translation");
        cam.fx = j.at("fx").get<double>();
        cam.fy = j.at("fy").get<double>();
        cam.cx = j.at("cx").get<double>();
        cam.cy = j.at("cy").get<double>();
        cam.width = j.at("width").get<int>();
        cam.height = j.at("height").get<int>();
        cam.near_clip = j.at("near").get<double>();
        cam.far_clip = j.at("far").get<double>();
    } catch (const json::exception& e) {
        throw Error(ErrorKind::BadConfig, std::string("camera: ") + e.what());
    }
    validate_camera(cam);
    return cam;
}

json params_json(const PipelineParams& p) {
    json j;
    j["k"] = p.k;
    j["n_rays"] = p.n_rays;
    j["gamma"] = p.gamma;
    j["lambda0"] = p.lambda0;
    j["lambda1"] = p.lambda1;
    j["lambda2"] = p.lambda2;
    j["epsilon"] = p.epsilon;
    j["eta"] = p.eta;
    j["zeta"] = p.zeta;
    j["sinkhorn_tol"] = p.sinkhorn_tol;
    j["sinkhorn_max_iters"] = p.sinkhorn_max_iters;
    j["refine_lr"] = p.refine_lr;
    j["refine_steps"] = p.refine_steps;
    j["momentum"] = p.momentum;
    j["max_pairs_per_epoch"] = p.max_pairs_per_epoch;
    j["ndd_knn"] = p.ndd_knn;
    j["seed"] = p.seed;
    return j;
}

PipelineParams params_from(const json& j) {
    PipelineParams p;
    try {
        for (auto it = j.begin(); it != j.end(); ++it) {
            const std::string& key = it.key();
            const json& v = it.value();
            if (key == "k") p.k = v.get<int>();
            else if (key == "n_rays") p.n_rays = v.get<uint64_t>();
            else if (key == "gamma") p.gamma = v.get<double>();
            else if (key == "lambda0") p.lambda0 = v.get<double>();
            else if (key == "lambda1") p.lambda1 = v.get<double>();
            else if (key == "lambda2") p.lambda2 = v.get<double>();
            else if (key == "epsilon") p.epsilon = v.get<double>();
            else if (key == "eta") p.eta = v.get<double>();
            else if (key == "zeta") p.zeta = v.get<double>();
            else if (key == "sinkhorn_tol") p.sinkhorn_tol = v.get<double>();
            else if (key == "sinkhorn_max_iters") p.sinkhorn_max_iters = v.get<int>();
            else if (key == "refine_lr") p.refine_lr = v.get<double>();
            else if (key == "refine_steps") p.refine_steps = v.get<int>();
            else if (key == "momentum") p.momentum = v.get<double>();
            else if (key == "max_pairs_per_epoch") p.max_pairs_per_epoch = v.get<int>();
            else if (key == "ndd_knn") p.ndd_knn = v.get<int>();
            else if (key == "seed") p.seed = v.get<uint64_t>();
            else throw Error(ErrorKind::BadConfig, "unknown params key \"" + key + "\"");
        }
    } catch (const json::exception& e) {
        throw Error(ErrorKind::BadConfig, std::string("params: ") + e.what());
    }
    validate_params(p);
    return p;
}

} // namespace

PipelineParams params_from_json_file(const std::string& path) {
    json j = parse_json_file(path);
    return params_from(j.value("params", json::object()));
}

EditSession load_session(const std::string& config_path) {
    json j = parse_json_file(config_path);
    std::filesystem::path base = std::filesystem::path(config_path).parent_path();
    auto resolve = [&](const std::string& rel) {
        std::filesystem::path p(rel);
        return p.is_absolute() ? p.string() : (base / p).string();
    };

    EditSession session;
    try {
        session.source_cloud = load_cloud(resolve(j.at("source_cloud").get<std::string>()));
        session.edited_cloud = load_cloud(resolve(j.at("edited_cloud").get<std::string>()));
        session.deformation = load_deformation(resolve(j.at("deformation").get<std::string>()));
        for (const json& cj : j.at("cameras")) session.cameras.push_back(camera_from(cj));
        session.params = params_from(j.value("params", json::object()));
    } catch (const json::exception& e) {
        throw Error(ErrorKind::BadConfig, config_path + ": " + e.what());
    }
    validate_session(session);
    return session;
}

void save_session_config(const EditSession& session, const std::string& source_rel,
                         const std::string& edited_rel, const std::string& deform_rel,
                         const std::string& path) {
    json j;
    j["source_cloud"] = source_rel;
    j["edited_cloud"] = edited_rel;
    j["deformation"] = deform_rel;
    j["cameras"] = json::array();
    for (const Camera& cam : session.cameras) j["cameras"].push_back(camera_json(cam));
    j["params"] = params_json(session.params);
    write_file(path, j.dump(2) + "\n");
}

} // namespace g4d
