#include <dbgc/slic.hpp>

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <set>

#include <nlohmann/json.hpp>

#include <dbgc/error.hpp>
#include <dbgc/io.hpp>

namespace dbgc {

using json = nlohmann::json;

namespace {

// ---------------------------------------------------------------------------
// CIELAB conversion (sRGB, D65 white point)
// ---------------------------------------------------------------------------

double srgb_to_linear(std::uint8_t v) {
    const double c = v / 255.0;
    return c <= 0.04045 ? c / 12.92 : std::pow((c + 0.055) / 1.055, 2.4);
}

double lab_f(double t) {
    constexpr double kDelta3 = (6.0 / 29) * (6.0 / 29) * (6.0 / 29);
    return t > kDelta3 ? std::cbrt(t)
                       : t / (3.0 * (6.0 / 29) * (6.0 / 29)) + 4.0 / 29;
}

struct Lab {
    double l = 0, a = 0, b = 0;
};

Lab rgb_to_lab(std::uint8_t r8, std::uint8_t g8, std::uint8_t b8) {
    const double r = srgb_to_linear(r8);
    const double g = srgb_to_linear(g8);
    const double b = srgb_to_linear(b8);
    const double x = 0.4124564 * r + 0.3575761 * g + 0.1804375 * b;
    const double y = 0.2126729 * r + 0.7151522 * g + 0.0721750 * b;
    const double z = 0.0193339 * r + 0.1191920 * g + 0.9503041 * b;
    const double fx = lab_f(x / 0.95047);
    const double fy = lab_f(y);
    const double fz = lab_f(z / 1.08883);
    return {116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz)};
}

struct Center {
    double l = 0, a = 0, b = 0;
    double row = 0, col = 0;
};

double lab_dist2(const Lab& p, const Center& c) {
    const double dl = p.l - c.l;
    const double da = p.a - c.a;
    const double db = p.b - c.b;
    return dl * dl + da * da + db * db;
}

// ---------------------------------------------------------------------------
// Deterministic merge machinery shared by orphan removal and the K bound
// ---------------------------------------------------------------------------

struct Components {
    std::vector<int> comp_of;          // per pixel
    std::vector<std::size_t> size;     // per component
    std::vector<std::set<int>> adj;    // per component, live neighbor ids
    std::vector<bool> alive;
    int live_count = 0;
};

Components find_components(const std::vector<std::uint32_t>& labels,
                           int height, int width) {
    const std::size_t n = labels.size();
    Components comps;
    comps.comp_of.assign(n, -1);
    std::deque<std::size_t> queue;
    for (std::size_t start = 0; start < n; ++start) {
        if (comps.comp_of[start] >= 0) continue;
        const int id = static_cast<int>(comps.size.size());
        comps.size.push_back(0);
        comps.comp_of[start] = id;
        queue.push_back(start);
        while (!queue.empty()) {
            const std::size_t p = queue.front();
            queue.pop_front();
            ++comps.size[id];
            const int r = static_cast<int>(p) / width;
            const int c = static_cast<int>(p) % width;
            const int nr[4] = {r - 1, r + 1, r, r};
            const int nc[4] = {c, c, c - 1, c + 1};
            for (int k = 0; k < 4; ++k) {
                if (nr[k] < 0 || nr[k] >= height || nc[k] < 0 ||
                    nc[k] >= width) {
                    continue;
                }
                const std::size_t q =
                    static_cast<std::size_t>(nr[k]) * width + nc[k];
                if (comps.comp_of[q] < 0 && labels[q] == labels[start]) {
                    comps.comp_of[q] = id;
                    queue.push_back(q);
                }
            }
        }
    }
    const int m = static_cast<int>(comps.size.size());
    comps.adj.resize(m);
    comps.alive.assign(m, true);
    comps.live_count = m;
    for (int r = 0; r < height; ++r) {
        for (int c = 0; c < width; ++c) {
            const int a = comps.comp_of[static_cast<std::size_t>(r) * width + c];
            if (c + 1 < width) {
                const int b =
                    comps.comp_of[static_cast<std::size_t>(r) * width + c + 1];
                if (a != b) {
                    comps.adj[a].insert(b);
                    comps.adj[b].insert(a);
                }
            }
            if (r + 1 < height) {
                const int b =
                    comps.comp_of[static_cast<std::size_t>(r + 1) * width + c];
                if (a != b) {
                    comps.adj[a].insert(b);
                    comps.adj[b].insert(a);
                }
            }
        }
    }
    return comps;
}

// Folds component `src` into `dst`, keeping sizes and adjacency current.
void merge_into(Components& comps, int src, int dst) {
    comps.size[dst] += comps.size[src];
    comps.size[src] = 0;
    for (const int nb : comps.adj[src]) {
        comps.adj[nb].erase(src);
        if (nb != dst) {
            comps.adj[nb].insert(dst);
            comps.adj[dst].insert(nb);
        }
    }
    comps.adj[src].clear();
    comps.alive[src] = false;
    --comps.live_count;
}

// Largest live neighbor of `src`; ties break toward the smallest id.
int merge_target(const Components& comps, int src) {
    int best = -1;
    std::size_t best_size = 0;
    for (const int nb : comps.adj[src]) {
        if (comps.size[nb] > best_size) {
            best_size = comps.size[nb];
            best = nb;
        }
    }
    return best;
}

}  // namespace

SuperpixelSegmentation slic_segment(const RgbImage& rgb, int k_target,
                                    double compactness, int iterations,
                                    std::uint64_t seed) {
    (void)seed;  // the algorithm is deterministic without it
    const int height = rgb.height;
    const int width = rgb.width;
    const auto pixels = static_cast<std::size_t>(height) * width;
    if (k_target < 1 || static_cast<std::size_t>(k_target) > pixels) {
        fail(ErrorCode::InvalidK,
             "k_target " + std::to_string(k_target) + " outside [1, " +
                 std::to_string(pixels) + "]");
    }

    std::vector<Lab> lab(pixels);
    for (std::size_t i = 0; i < pixels; ++i) {
        lab[i] = rgb_to_lab(rgb.data[i * 3], rgb.data[i * 3 + 1],
                            rgb.data[i * 3 + 2]);
    }

    const double step =
        std::sqrt(static_cast<double>(pixels) / k_target);
    const int max_k =
        static_cast<int>(std::floor(1.5 * static_cast<double>(k_target)));

    // Regular grid of centers; the count is capped so that even extreme
    // aspect ratios cannot start above the allowed segment budget.
    int nx = std::max(1, static_cast<int>(std::lround(width / step)));
    int ny = std::max(1, static_cast<int>(std::lround(height / step)));
    while (nx * ny > max_k) {
        if (nx >= ny && nx > 1) {
            --nx;
        } else if (ny > 1) {
            --ny;
        } else {
            break;
        }
    }

    std::vector<Center> centers;
    centers.reserve(static_cast<std::size_t>(nx) * ny);
    for (int gy = 0; gy < ny; ++gy) {
        for (int gx = 0; gx < nx; ++gx) {
            int r = static_cast<int>((gy + 0.5) * height / ny);
            int c = static_cast<int>((gx + 0.5) * width / nx);
            r = std::clamp(r, 0, height - 1);
            c = std::clamp(c, 0, width - 1);

            // Move to the lowest-gradient spot in a 3x3 window so centers
            // avoid edges; the center keeps its place on ties.
            auto gradient = [&](int rr, int cc) {
                const int r0 = std::max(0, rr - 1);
                const int r1 = std::min(height - 1, rr + 1);
                const int c0 = std::max(0, cc - 1);
                const int c1 = std::min(width - 1, cc + 1);
                const Lab& up = lab[static_cast<std::size_t>(r0) * width + cc];
                const Lab& dn = lab[static_cast<std::size_t>(r1) * width + cc];
                const Lab& lf = lab[static_cast<std::size_t>(rr) * width + c0];
                const Lab& rt = lab[static_cast<std::size_t>(rr) * width + c1];
                const double dv = (dn.l - up.l) * (dn.l - up.l) +
                                  (dn.a - up.a) * (dn.a - up.a) +
                                  (dn.b - up.b) * (dn.b - up.b);
                const double dh = (rt.l - lf.l) * (rt.l - lf.l) +
                                  (rt.a - lf.a) * (rt.a - lf.a) +
                                  (rt.b - lf.b) * (rt.b - lf.b);
                return dv + dh;
            };
            int best_r = r;
            int best_c = c;
            double best_g = gradient(r, c);
            for (int dr = -1; dr <= 1; ++dr) {
                for (int dc = -1; dc <= 1; ++dc) {
                    const int rr = r + dr;
                    const int cc = c + dc;
                    if (rr < 0 || rr >= height || cc < 0 || cc >= width) {
                        continue;
                    }
                    const double g = gradient(rr, cc);
                    if (g < best_g) {
                        best_g = g;
                        best_r = rr;
                        best_c = cc;
                    }
                }
            }
            const Lab& seed_lab =
                lab[static_cast<std::size_t>(best_r) * width + best_c];
            centers.push_back({seed_lab.l, seed_lab.a, seed_lab.b,
                               static_cast<double>(best_r),
                               static_cast<double>(best_c)});
        }
    }
    const int num_centers = static_cast<int>(centers.size());

    // Spatial Voronoi of the initial centers guarantees every pixel starts
    // with a label even where the 2Sx2S windows do not cover the image.
    std::vector<std::uint32_t> labels(pixels, 0);
    for (int r = 0; r < height; ++r) {
        for (int c = 0; c < width; ++c) {
            double best = std::numeric_limits<double>::max();
            int best_k = 0;
            for (int k = 0; k < num_centers; ++k) {
                const double dr = r - centers[k].row;
                const double dc = c - centers[k].col;
                const double d2 = dr * dr + dc * dc;
                if (d2 < best) {
                    best = d2;
                    best_k = k;
                }
            }
            labels[static_cast<std::size_t>(r) * width + c] =
                static_cast<std::uint32_t>(best_k);
        }
    }

    const double spatial_scale = compactness / step;
    const int window = static_cast<int>(std::ceil(step));
    std::vector<double> best_dist(pixels);
    for (int iter = 0; iter < iterations; ++iter) {
        std::fill(best_dist.begin(), best_dist.end(),
                  std::numeric_limits<double>::max());
        for (int k = 0; k < num_centers; ++k) {
            const Center& ctr = centers[k];
            const int cr = static_cast<int>(std::lround(ctr.row));
            const int cc = static_cast<int>(std::lround(ctr.col));
            const int r0 = std::max(0, cr - window);
            const int r1 = std::min(height - 1, cr + window);
            const int c0 = std::max(0, cc - window);
            const int c1 = std::min(width - 1, cc + window);
            for (int r = r0; r <= r1; ++r) {
                for (int c = c0; c <= c1; ++c) {
                    const std::size_t p =
                        static_cast<std::size_t>(r) * width + c;
                    const double d_lab = std::sqrt(lab_dist2(lab[p], ctr));
                    const double dr = r - ctr.row;
                    const double dc = c - ctr.col;
                    const double d_xy = std::sqrt(dr * dr + dc * dc);
                    const double d = d_lab + spatial_scale * d_xy;
                    if (d < best_dist[p]) {
                        best_dist[p] = d;
                        labels[p] = static_cast<std::uint32_t>(k);
                    }
                }
            }
        }

        std::vector<Center> sums(num_centers);
        std::vector<std::size_t> counts(num_centers, 0);
        for (int r = 0; r < height; ++r) {
            for (int c = 0; c < width; ++c) {
                const std::size_t p = static_cast<std::size_t>(r) * width + c;
                const auto k = labels[p];
                sums[k].l += lab[p].l;
                sums[k].a += lab[p].a;
                sums[k].b += lab[p].b;
                sums[k].row += r;
                sums[k].col += c;
                ++counts[k];
            }
        }
        for (int k = 0; k < num_centers; ++k) {
            if (counts[k] == 0) continue;  // empty cluster keeps its place
            const double inv = 1.0 / static_cast<double>(counts[k]);
            centers[k] = {sums[k].l * inv, sums[k].a * inv, sums[k].b * inv,
                          sums[k].row * inv, sums[k].col * inv};
        }
    }

    // Connectivity enforcement: dissolve fragments below S^2/4 into their
    // largest neighbor, then keep merging the smallest segment while the
    // count exceeds the 1.5x budget. Smallest size wins, ties go to the
    // smallest id, so the whole procedure is order-deterministic.
    Components comps = find_components(labels, height, width);
    const double min_size = step * step / 4.0;
    auto merge_smallest_below = [&](double threshold) {
        for (;;) {
            int victim = -1;
            std::size_t victim_size = 0;
            for (std::size_t i = 0; i < comps.size.size(); ++i) {
                if (!comps.alive[i]) continue;
                if (static_cast<double>(comps.size[i]) < threshold &&
                    (victim < 0 || comps.size[i] < victim_size)) {
                    victim = static_cast<int>(i);
                    victim_size = comps.size[i];
                }
            }
            if (victim < 0 || comps.live_count <= 1) return;
            const int dst = merge_target(comps, victim);
            if (dst < 0) return;
            for (auto& c : comps.comp_of) {
                if (c == victim) c = dst;
            }
            merge_into(comps, victim, dst);
        }
    };
    merge_smallest_below(min_size);
    while (comps.live_count > max_k) {
        int victim = -1;
        std::size_t victim_size = 0;
        for (std::size_t i = 0; i < comps.size.size(); ++i) {
            if (!comps.alive[i]) continue;
            if (victim < 0 || comps.size[i] < victim_size) {
                victim = static_cast<int>(i);
                victim_size = comps.size[i];
            }
        }
        const int dst = merge_target(comps, victim);
        if (dst < 0) break;
        for (auto& c : comps.comp_of) {
            if (c == victim) c = dst;
        }
        merge_into(comps, victim, dst);
    }

    // Contiguous relabel in order of first appearance.
    std::vector<int> remap(comps.size.size(), -1);
    int next_id = 0;
    SuperpixelSegmentation seg;
    seg.height = height;
    seg.width = width;
    seg.k_target = k_target;
    seg.labels.resize(pixels);
    for (std::size_t p = 0; p < pixels; ++p) {
        const int comp = comps.comp_of[p];
        if (remap[comp] < 0) remap[comp] = next_id++;
        seg.labels[p] = static_cast<std::uint32_t>(remap[comp]);
    }
    seg.k = next_id;
    return seg;
}

void SuperpixelSegmentation::validate() const {
    const auto pixels = static_cast<std::size_t>(height) * width;
    if (labels.size() != pixels) {
        fail(ErrorCode::ShapeMismatch, "label buffer does not match image");
    }
    if (k < 1) fail(ErrorCode::InvalidK, "segment count must be positive");
    std::vector<std::size_t> counts(k, 0);
    for (const auto v : labels) {
        if (v >= static_cast<std::uint32_t>(k)) {
            fail(ErrorCode::CorruptData,
                 "label " + std::to_string(v) + " out of range");
        }
        ++counts[v];
    }
    for (int i = 0; i < k; ++i) {
        if (counts[i] == 0) {
            fail(ErrorCode::CorruptData,
                 "segment id " + std::to_string(i) + " is unused");
        }
    }
    const Components comps = find_components(labels, height, width);
    if (static_cast<int>(comps.size.size()) != k) {
        fail(ErrorCode::CorruptData,
             "segments are not 4-connected: " +
                 std::to_string(comps.size.size()) + " components for " +
                 std::to_string(k) + " ids");
    }
    if (k_target > 0 &&
        k > static_cast<int>(std::floor(1.5 * k_target))) {
        fail(ErrorCode::InvalidK,
             "segment count " + std::to_string(k) + " exceeds 1.5 x " +
                 std::to_string(k_target));
    }
}

std::vector<std::size_t> segment_sizes(const SuperpixelSegmentation& seg) {
    std::vector<std::size_t> counts(seg.k, 0);
    for (const auto v : seg.labels) ++counts[v];
    return counts;
}

void save_segmentation(const std::filesystem::path& directory,
                       const SuperpixelSegmentation& seg) {
    std::filesystem::create_directories(directory);
    write_u32_file(directory / "labels.bin", seg.labels);
    json j{{"height", seg.height},
           {"width", seg.width},
           {"k", seg.k},
           {"k_target", seg.k_target}};
    write_text_file(directory / "segmentation.json", j.dump(2) + "\n");
}

SuperpixelSegmentation load_segmentation(
    const std::filesystem::path& directory) {
    const auto header_path = directory / "segmentation.json";
    if (!std::filesystem::exists(header_path)) {
        fail(ErrorCode::MissingChannel,
             "missing header " + header_path.string());
    }
    json j;
    try {
        j = json::parse(read_text_file(header_path));
    } catch (const json::exception& e) {
        fail(ErrorCode::CorruptData,
             "cannot parse " + header_path.string() + ": " + e.what());
    }
    SuperpixelSegmentation seg;
    seg.height = j.at("height").get<int>();
    seg.width = j.at("width").get<int>();
    seg.k = j.at("k").get<int>();
    seg.k_target = j.value("k_target", 0);
    seg.labels = read_u32_file(directory / "labels.bin");
    seg.validate();
    return seg;
}

RgbImage boundary_overlay(const RgbImage& rgb,
                          const SuperpixelSegmentation& seg) {
    require_same_dims(rgb.height, rgb.width, seg.height, seg.width,
                      "boundary overlay");
    RgbImage out = rgb;
    for (int r = 0; r < seg.height; ++r) {
        for (int c = 0; c < seg.width; ++c) {
            const auto here = seg.label(r, c);
            const bool edge =
                (r + 1 < seg.height && seg.label(r + 1, c) != here) ||
                (c + 1 < seg.width && seg.label(r, c + 1) != here);
            if (edge) out.set_pixel(r, c, {255, 255, 255});
        }
    }
    return out;
}

}  // namespace dbgc
