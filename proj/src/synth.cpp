// SPDX-License-Identifier: Apache-2.0

#include "oopk/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

namespace oopk {

CorruptionKind corruption_kind_from(const std::string& name) {
    if (name == "none") return CorruptionKind::None;
    if (name == "fog") return CorruptionKind::Fog;
    if (name == "dark") return CorruptionKind::Dark;
    if (name == "noise") return CorruptionKind::Noise;
    if (name == "blur") return CorruptionKind::Blur;
    throw ConfigError("unknown corruption kind '" + name + "'");
}

std::string corruption_kind_name(CorruptionKind k) {
    switch (k) {
        case CorruptionKind::None: return "none";
        case CorruptionKind::Fog: return "fog";
        case CorruptionKind::Dark: return "dark";
        case CorruptionKind::Noise: return "noise";
        case CorruptionKind::Blur: return "blur";
    }
    return "none";
}

std::vector<std::array<double, 3>> class_palette(int k) {
    // Class 0 is the background gray band; the rest are saturated hues
    // spaced around the color wheel.
    std::vector<std::array<double, 3>> pal;
    pal.push_back({0.35, 0.35, 0.35});
    for (int c = 1; c < k; ++c) {
        const double hue = 2.0 * 3.14159265358979323846 * (c - 1) / std::max(1, k - 1);
        pal.push_back({0.55 + 0.4 * std::cos(hue), 0.55 + 0.4 * std::cos(hue - 2.0944),
                       0.55 + 0.4 * std::cos(hue + 2.0944)});
    }
    return pal;
}

namespace {

void paint(SegSample& s, int y, int x, int cls, const std::array<double, 3>& col) {
    const long plane = static_cast<long>(s.height) * s.width;
    const long i = static_cast<long>(y) * s.width + x;
    for (int ch = 0; ch < 3; ++ch)
        s.image.data[static_cast<std::size_t>(ch) * plane + i] =
            std::clamp(col[static_cast<std::size_t>(ch)], 0.0, 1.0);
    s.label[static_cast<std::size_t>(i)] = cls;
}

}  // namespace

SegSample gen_scene(std::uint64_t seed, int h, int w, int k) {
    if (k < 2) throw ConfigError("gen_scene: need at least 2 classes");
    if (h < 16 || w < 16) throw ConfigError("gen_scene: extents must be >= 16");
    Rng rng = Rng(seed).stream("scene");
    SegSample s;
    s.height = h;
    s.width = w;
    s.num_classes = k;
    s.image = Tensor({3, h, w});
    s.label.assign(static_cast<std::size_t>(h) * w, 0);
    const auto pal = class_palette(k);

    // Background: vertical gradient around the class-0 gray.
    const double g0 = rng.uniform(0.18, 0.30), g1 = rng.uniform(0.40, 0.55);
    for (int y = 0; y < h; ++y) {
        const double t = static_cast<double>(y) / (h - 1);
        const double v = g0 + (g1 - g0) * t;
        for (int x = 0; x < w; ++x) paint(s, y, x, 0, {v, v, v});
    }

    const int shapes = 6 + static_cast<int>(rng.below(5));
    for (int n = 0; n < shapes; ++n) {
        const int cls = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(k - 1)));
        std::array<double, 3> col = pal[static_cast<std::size_t>(cls)];
        for (auto& c : col) c += rng.uniform(-0.05, 0.05);
        const int type = static_cast<int>(rng.below(3));
        if (type == 0) {  // rectangle
            const int rw = 4 + static_cast<int>(rng.below(static_cast<std::uint64_t>(w / 2)));
            const int rh = 4 + static_cast<int>(rng.below(static_cast<std::uint64_t>(h / 2)));
            const int x0 = static_cast<int>(rng.below(static_cast<std::uint64_t>(std::max(1, w - rw))));
            const int y0 = static_cast<int>(rng.below(static_cast<std::uint64_t>(std::max(1, h - rh))));
            for (int y = y0; y < std::min(h, y0 + rh); ++y)
                for (int x = x0; x < std::min(w, x0 + rw); ++x) paint(s, y, x, cls, col);
        } else if (type == 1) {  // disc
            const double cy = rng.uniform(0, h), cx = rng.uniform(0, w);
            const double r = rng.uniform(3.0, std::min(h, w) / 3.0);
            const double r2 = r * r;
            for (int y = std::max(0, static_cast<int>(cy - r)); y <= std::min(h - 1, static_cast<int>(cy + r)); ++y)
                for (int x = std::max(0, static_cast<int>(cx - r)); x <= std::min(w - 1, static_cast<int>(cx + r)); ++x)
                    if ((y - cy) * (y - cy) + (x - cx) * (x - cx) <= r2) paint(s, y, x, cls, col);
        } else {  // diagonal stripe
            const double angle = rng.uniform(0.0, 3.14159265358979323846);
            const double dx = std::cos(angle), dy = std::sin(angle);
            const double c0 = rng.uniform(0.0, static_cast<double>(h + w));
            const double thick = rng.uniform(2.0, 6.0);
            for (int y = 0; y < h; ++y)
                for (int x = 0; x < w; ++x)
                    if (std::abs(x * dx + y * dy - c0) < thick) paint(s, y, x, cls, col);
        }
    }
    return s;
}

Tensor fog_blend(const Tensor& x, const Tensor& weight) {
    if (x.rank() != 3 || weight.rank() != 2 || weight.dim(0) != x.dim(1) ||
        weight.dim(1) != x.dim(2))
        throw DimensionError("fog_blend: weight field must be [H,W]");
    Tensor out = x;
    const long plane = static_cast<long>(x.dim(1)) * x.dim(2);
    for (int c = 0; c < 3; ++c)
        for (long i = 0; i < plane; ++i) {
            const double wv = weight.data[static_cast<std::size_t>(i)];
            double& v = out.data[static_cast<std::size_t>(c) * plane + i];
            v = (1.0 - wv) * v + wv;
        }
    return out;
}

Tensor corrupt(const Tensor& x, const CorruptionSpec& spec) {
    if (spec.severity < 0.0 || spec.severity > 1.0)
        throw ConfigError("corrupt: severity must be in [0,1]");
    if (x.rank() != 3) throw DimensionError("corrupt: expected [3,H,W]");
    const int h = x.dim(1), w = x.dim(2);
    const long plane = static_cast<long>(h) * w;
    const double sev = spec.severity;
    if (sev == 0.0 || spec.kind == CorruptionKind::None) return x;
    Rng rng = Rng(spec.seed).stream("corrupt");
    switch (spec.kind) {
        case CorruptionKind::Fog: {
            // Smooth weight field in [0.5, 1] * severity: low-frequency sines
            // with a random phase.
            const double ph1 = rng.uniform(0.0, 6.28), ph2 = rng.uniform(0.0, 6.28);
            Tensor field({h, w});
            for (int y = 0; y < h; ++y)
                for (int x2 = 0; x2 < w; ++x2) {
                    const double f = 0.75 + 0.125 * std::sin(2.0 * 3.14159 * y / h + ph1) +
                                     0.125 * std::sin(2.0 * 3.14159 * x2 / w + ph2);
                    field.at(y, x2) = sev * f;
                }
            return fog_blend(x, field);
        }
        case CorruptionKind::Dark: {
            const double gamma = 1.0 + 2.0 * sev;
            const double gain = 1.0 - 0.5 * sev;
            Tensor out = x;
            for (double& v : out.data) v = gain * std::pow(std::max(v, 0.0), gamma);
            return out;
        }
        case CorruptionKind::Noise: {
            // Unit noise field scaled by severity so MSE is monotone in it.
            const double sigma = 0.30 * sev;
            Tensor out = x;
            for (double& v : out.data) v = std::clamp(v + sigma * rng.gaussian(), 0.0, 1.0);
            return out;
        }
        case CorruptionKind::Blur: {
            const int reps = static_cast<int>(std::lround(4.0 * sev));
            Tensor out = x;
            Tensor tmp({3, h, w});
            for (int r = 0; r < reps; ++r) {
                for (int c = 0; c < 3; ++c) {
                    const double* src = &out.data[static_cast<std::size_t>(c) * plane];
                    double* dst = &tmp.data[static_cast<std::size_t>(c) * plane];
                    for (int y = 0; y < h; ++y)
                        for (int x2 = 0; x2 < w; ++x2) {
                            double acc = 0.0;
                            int cnt = 0;
                            for (int dy = -1; dy <= 1; ++dy)
                                for (int dx = -1; dx <= 1; ++dx) {
                                    const int yy = y + dy, xx = x2 + dx;
                                    if (yy < 0 || yy >= h || xx < 0 || xx >= w) continue;
                                    acc += src[static_cast<std::size_t>(yy) * w + xx];
                                    ++cnt;
                                }
                            dst[static_cast<std::size_t>(y) * w + x2] = acc / cnt;
                        }
                }
                std::swap(out.data, tmp.data);
            }
            return out;
        }
        default: return x;
    }
}

DomainStream build_stream(const std::vector<DomainSpec>& domains, int samples_per_domain,
                          int rounds, std::uint64_t seed) {
    if (domains.empty()) throw ConfigError("build_stream: no domains");
    if (samples_per_domain < 1 || rounds < 1)
        throw ConfigError("build_stream: samples and rounds must be >= 1");
    std::set<std::string> names;
    for (const auto& d : domains)
        if (!names.insert(d.name).second)
            throw ConfigError("build_stream: duplicate domain '" + d.name + "'");
    DomainStream s;
    s.rounds = rounds;
    const Rng master(seed);
    for (const auto& d : domains) s.domains.push_back(d.name);
    for (int r = 1; r <= rounds; ++r)
        for (std::size_t di = 0; di < domains.size(); ++di)
            for (int i = 0; i < samples_per_domain; ++i) {
                StreamEntry e;
                e.round = r;
                e.domain = domains[di].name;
                e.corruption.kind = domains[di].kind;
                e.corruption.severity = domains[di].severity;
                Rng sr = master.stream(domains[di].name,
                                       static_cast<std::uint64_t>(r) * 1000003ULL +
                                           static_cast<std::uint64_t>(i));
                e.corruption.seed = sr.next_u64();
                s.entries.push_back(std::move(e));
            }
    return s;
}

SegSample realize_entry(const StreamEntry& entry, int h, int w, int k) {
    SegSample s = gen_scene(entry.corruption.seed, h, w, k);
    s.image = corrupt(s.image, entry.corruption);
    return s;
}

std::string stream_to_text(const DomainStream& s) {
    std::ostringstream os;
    os << "round,domain,kind,severity,seed,image_path,label_path\n";
    char sev[32];
    for (const auto& e : s.entries) {
        std::snprintf(sev, sizeof(sev), "%.4f", e.corruption.severity);
        os << e.round << "," << e.domain << "," << corruption_kind_name(e.corruption.kind) << ","
           << sev << "," << e.corruption.seed << "," << e.image_path << "," << e.label_path
           << "\n";
    }
    return os.str();
}

DomainStream stream_from_text(const std::string& text) {
    DomainStream s;
    std::istringstream is(text);
    std::string line;
    if (!std::getline(is, line) || line != "round,domain,kind,severity,seed,image_path,label_path")
        throw FormatError("stream manifest: bad header");
    std::set<std::string> seen;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::vector<std::string> f;
        std::size_t start = 0;
        for (int i = 0; i < 6; ++i) {
            const std::size_t c = line.find(',', start);
            if (c == std::string::npos) throw FormatError("stream manifest: short line: " + line);
            f.push_back(line.substr(start, c - start));
            start = c + 1;
        }
        f.push_back(line.substr(start));
        StreamEntry e;
        e.round = std::stoi(f[0]);
        e.domain = f[1];
        e.corruption.kind = corruption_kind_from(f[2]);
        e.corruption.severity = std::stod(f[3]);
        e.corruption.seed = std::stoull(f[4]);
        e.image_path = f[5];
        e.label_path = f[6];
        s.entries.push_back(std::move(e));
        s.rounds = std::max(s.rounds, s.entries.back().round);
        if (seen.insert(f[1]).second) s.domains.push_back(f[1]);
    }
    return s;
}

void save_stream(const std::string& path, const DomainStream& s) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw FormatError("cannot write " + path);
    out << stream_to_text(s);
}

DomainStream load_stream(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot read " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return stream_from_text(ss.str());
}

namespace {

int read_pnm_int(std::istream& in, const std::string& path) {
    int c = in.peek();
    while (c == '#' || std::isspace(c)) {
        if (c == '#') {
            std::string comment;
            std::getline(in, comment);
        } else {
            in.get();
        }
        c = in.peek();
    }
    int v;
    if (!(in >> v))
        throw FormatError(path + ": malformed PNM header at byte offset " +
                          std::to_string(static_cast<long>(in.tellg())));
    return v;
}

}  // namespace

void save_ppm(const std::string& path, const Tensor& image) {
    if (image.rank() != 3 || image.dim(0) != 3) throw DimensionError("save_ppm: expected [3,H,W]");
    const int h = image.dim(1), w = image.dim(2);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw FormatError("cannot write " + path);
    out << "P6\n" << w << " " << h << "\n255\n";
    const long plane = static_cast<long>(h) * w;
    std::vector<unsigned char> buf(static_cast<std::size_t>(plane) * 3);
    for (long i = 0; i < plane; ++i)
        for (int c = 0; c < 3; ++c) {
            const double v = image.data[static_cast<std::size_t>(c) * plane + i];
            buf[static_cast<std::size_t>(i) * 3 + c] =
                static_cast<unsigned char>(std::clamp(std::lround(v * 255.0), 0L, 255L));
        }
    out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
}

Tensor load_ppm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot read " + path);
    std::string magic;
    in >> magic;
    if (magic != "P6") throw FormatError(path + ": not a P6 PPM (byte offset 0)");
    const int w = read_pnm_int(in, path);
    const int h = read_pnm_int(in, path);
    const int maxval = read_pnm_int(in, path);
    if (maxval != 255) throw FormatError(path + ": unsupported maxval " + std::to_string(maxval));
    in.get();  // single whitespace before payload
    const long plane = static_cast<long>(h) * w;
    std::vector<unsigned char> buf(static_cast<std::size_t>(plane) * 3);
    in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (in.gcount() != static_cast<std::streamsize>(buf.size()))
        throw FormatError(path + ": truncated payload at byte offset " +
                          std::to_string(static_cast<long>(in.tellg())));
    Tensor img({3, h, w});
    for (long i = 0; i < plane; ++i)
        for (int c = 0; c < 3; ++c)
            img.data[static_cast<std::size_t>(c) * plane + i] =
                buf[static_cast<std::size_t>(i) * 3 + c] / 255.0;
    return img;
}

void save_pgm(const std::string& path, const std::vector<int>& label, int h, int w) {
    if (static_cast<long>(label.size()) != static_cast<long>(h) * w)
        throw DimensionError("save_pgm: label size mismatch");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw FormatError("cannot write " + path);
    out << "P5\n" << w << " " << h << "\n255\n";
    std::vector<unsigned char> buf(label.size());
    for (std::size_t i = 0; i < label.size(); ++i) {
        if (label[i] < 0 || label[i] > 255) throw FormatError("save_pgm: label id out of byte range");
        buf[i] = static_cast<unsigned char>(label[i]);
    }
    out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
}

std::vector<int> load_pgm(const std::string& path, int& h, int& w) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot read " + path);
    std::string magic;
    in >> magic;
    if (magic != "P5") throw FormatError(path + ": not a P5 PGM (byte offset 0)");
    w = read_pnm_int(in, path);
    h = read_pnm_int(in, path);
    const int maxval = read_pnm_int(in, path);
    if (maxval != 255) throw FormatError(path + ": unsupported maxval " + std::to_string(maxval));
    in.get();
    std::vector<unsigned char> buf(static_cast<std::size_t>(h) * w);
    in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (in.gcount() != static_cast<std::streamsize>(buf.size()))
        throw FormatError(path + ": truncated payload at byte offset " +
                          std::to_string(static_cast<long>(in.tellg())));
    std::vector<int> label(buf.size());
    for (std::size_t i = 0; i < buf.size(); ++i) label[i] = buf[i];
    return label;
}

void save_sample(const SegSample& s, const std::string& image_path,
                 const std::string& label_path) {
    save_ppm(image_path, s.image);
    save_pgm(label_path, s.label, s.height, s.width);
}

SegSample load_sample(const std::string& image_path, const std::string& label_path,
                      int num_classes) {
    SegSample s;
    s.image = load_ppm(image_path);
    s.height = s.image.dim(1);
    s.width = s.image.dim(2);
    s.num_classes = num_classes;
    int lh = 0, lw = 0;
    s.label = load_pgm(label_path, lh, lw);
    if (lh != s.height || lw != s.width)
        throw FormatError("sample: image/label extent mismatch for " + image_path);
    return s;
}

}  // namespace oopk
