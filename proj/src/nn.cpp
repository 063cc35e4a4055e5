#include "sdseg/nn.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

namespace sdseg {

using detail::ConvSpec;
using detail::Tensor;
using RowMat = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using CMapMat = Eigen::Map<const RowMat>;

namespace {

constexpr int kGemmChunk = 8192; // target output pixels per im2col tile

inline void lerp_coords(int dst, int src_size, double scale, int& i0, int& i1, float& f) {
    double s = (dst + 0.5) * scale - 0.5;
    if (s < 0.0) s = 0.0;
    if (s > src_size - 1) s = src_size - 1;
    i0 = static_cast<int>(s);
    i1 = std::min(i0 + 1, src_size - 1);
    f = static_cast<float>(s - i0);
}

// im2col for a 3x3 same-padding conv over output rows [y0,y1); row-aligned
// tiles keep the inner loops straight memcpy
void im2col3(const float* x, int cin, int h, int w, int y0, int y1, float* col) {
    const std::size_t cw = static_cast<std::size_t>(y1 - y0) * w;
    for (int c = 0; c < cin; ++c) {
        const float* xc = x + static_cast<std::size_t>(c) * h * w;
        for (int j = 0; j < 9; ++j) {
            const int dy = j / 3 - 1, dx = j % 3 - 1;
            float* dst0 = col + (static_cast<std::size_t>(c) * 9 + j) * cw;
            for (int y = y0; y < y1; ++y) {
                float* dst = dst0 + static_cast<std::size_t>(y - y0) * w;
                const int sy = y + dy;
                if (static_cast<unsigned>(sy) >= static_cast<unsigned>(h)) {
                    std::memset(dst, 0, sizeof(float) * static_cast<std::size_t>(w));
                    continue;
                }
                const float* src = xc + static_cast<std::size_t>(sy) * w;
                if (dx == 0) {
                    std::memcpy(dst, src, sizeof(float) * static_cast<std::size_t>(w));
                } else if (dx < 0) {
                    dst[0] = 0.f;
                    std::memcpy(dst + 1, src, sizeof(float) * static_cast<std::size_t>(w - 1));
                } else {
                    std::memcpy(dst, src + 1, sizeof(float) * static_cast<std::size_t>(w - 1));
                    dst[w - 1] = 0.f;
                }
            }
        }
    }
}

// adjoint of im2col3: accumulate a column tile back into dx
void col2im3_add(const float* col, int cin, int h, int w, int y0, int y1, float* dx) {
    const std::size_t cw = static_cast<std::size_t>(y1 - y0) * w;
    for (int c = 0; c < cin; ++c) {
        float* xc = dx + static_cast<std::size_t>(c) * h * w;
        for (int j = 0; j < 9; ++j) {
            const int dy = j / 3 - 1, dxo = j % 3 - 1;
            const float* src0 = col + (static_cast<std::size_t>(c) * 9 + j) * cw;
            for (int y = y0; y < y1; ++y) {
                const float* src = src0 + static_cast<std::size_t>(y - y0) * w;
                const int sy = y + dy;
                if (static_cast<unsigned>(sy) >= static_cast<unsigned>(h)) continue;
                float* out = xc + static_cast<std::size_t>(sy) * w;
                if (dxo == 0) {
                    for (int i = 0; i < w; ++i) out[i] += src[i];
                } else if (dxo < 0) {
                    for (int i = 1; i < w; ++i) out[i - 1] += src[i];
                } else {
                    for (int i = 0; i < w - 1; ++i) out[i + 1] += src[i];
                }
            }
        }
    }
}

inline int rows_per_tile(int w) { return std::max(1, kGemmChunk / std::max(w, 1)); }

} // namespace

void bilinear_resize_plane(const float* src, int sh, int sw, float* dst, int dh, int dw,
                           int dst_stride) {
    const double sy = static_cast<double>(sh) / dh;
    const double sx = static_cast<double>(sw) / dw;
    std::vector<int> x0(dw), x1(dw);
    std::vector<float> fx(dw);
    for (int x = 0; x < dw; ++x) lerp_coords(x, sw, sx, x0[x], x1[x], fx[x]);
    for (int y = 0; y < dh; ++y) {
        int y0, y1;
        float fy;
        lerp_coords(y, sh, sy, y0, y1, fy);
        const float* r0 = src + static_cast<std::size_t>(y0) * sw;
        const float* r1 = src + static_cast<std::size_t>(y1) * sw;
        float* out = dst + static_cast<std::size_t>(y) * dw * dst_stride;
        for (int x = 0; x < dw; ++x) {
            const float top = r0[x0[x]] + fx[x] * (r0[x1[x]] - r0[x0[x]]);
            const float bot = r1[x0[x]] + fx[x] * (r1[x1[x]] - r1[x0[x]]);
            out[static_cast<std::size_t>(x) * dst_stride] = top + fy * (bot - top);
        }
    }
}

namespace {

void upsample2_forward(const Tensor& x, Tensor& y) {
    y.resize(x.c, x.h * 2, x.w * 2);
    for (int c = 0; c < x.c; ++c)
        bilinear_resize_plane(x.v.data() + static_cast<std::size_t>(c) * x.h * x.w, x.h, x.w,
                              y.v.data() + static_cast<std::size_t>(c) * y.h * y.w, y.h, y.w);
}

void upsample2_backward(const Tensor& dy, Tensor& dx_accum) {
    const int sh = dy.h / 2, sw = dy.w / 2;
    std::vector<int> x0(dy.w), x1(dy.w);
    std::vector<float> fx(dy.w);
    for (int x = 0; x < dy.w; ++x) lerp_coords(x, sw, 0.5, x0[x], x1[x], fx[x]);
    for (int c = 0; c < dy.c; ++c) {
        const float* g = dy.v.data() + static_cast<std::size_t>(c) * dy.h * dy.w;
        float* d = dx_accum.v.data() + static_cast<std::size_t>(c) * sh * sw;
        for (int y = 0; y < dy.h; ++y) {
            int y0, y1;
            float fy;
            lerp_coords(y, sh, 0.5, y0, y1, fy);
            for (int x = 0; x < dy.w; ++x) {
                const float v = g[static_cast<std::size_t>(y) * dy.w + x];
                const float w00 = (1.f - fy) * (1.f - fx[x]);
                const float w01 = (1.f - fy) * fx[x];
                const float w10 = fy * (1.f - fx[x]);
                const float w11 = fy * fx[x];
                d[static_cast<std::size_t>(y0) * sw + x0[x]] += v * w00;
                d[static_cast<std::size_t>(y0) * sw + x1[x]] += v * w01;
                d[static_cast<std::size_t>(y1) * sw + x0[x]] += v * w10;
                d[static_cast<std::size_t>(y1) * sw + x1[x]] += v * w11;
            }
        }
    }
}

} // namespace

UNet::UNet(UNetDescriptor desc, ImageShape working, std::uint64_t seed)
    : desc_(desc), working_(working) {
    if (desc_.in_channels < 1 || desc_.depth < 1 || desc_.base_width < 1)
        throw ConfigError("UNet: descriptor fields must be positive");
    if (!working_.valid()) throw ConfigError("UNet: invalid working shape");
    const int f = desc_.downsampling_factor();
    if (working_.height % f != 0 || working_.width % f != 0)
        throw ConfigError("UNet: working resolution " + to_string(working_) +
                          " is not divisible by the downsampling factor " + std::to_string(f));
    build_layout();

    std::mt19937 rng(seed);
    for (const auto& cs : convs_) {
        const float stddev = std::sqrt(2.f / (static_cast<float>(cs.cin) * cs.k * cs.k));
        std::normal_distribution<float> dist(0.f, stddev);
        for (std::size_t i = 0; i < cs.weight_count(); ++i) params_[cs.w_off + i] = dist(rng);
        // biases stay zero
    }
}

void UNet::build_layout() {
    const int d = desc_.depth;
    auto add = [&](int cin, int cout, int k) {
        ConvSpec cs;
        cs.cin = cin;
        cs.cout = cout;
        cs.k = k;
        convs_.push_back(cs);
    };
    int prev = desc_.in_channels;
    for (int s = 0; s < d; ++s) {
        add(prev, encoder_width(s), 3);
        add(encoder_width(s), encoder_width(s), 3);
        prev = encoder_width(s);
    }
    const int bott = desc_.base_width << d;
    add(prev, bott, 3);
    add(bott, bott, 3);
    prev = bott;
    for (int i = 0; i < d; ++i) {
        const int s = d - 1 - i; // skip stage consumed by this decoder step
        add(prev + encoder_width(s), encoder_width(s), 3);
        add(encoder_width(s), encoder_width(s), 3);
        prev = encoder_width(s);
    }
    add(desc_.base_width, 1, 1); // sigmoid head

    std::size_t off = 0;
    for (auto& cs : convs_) {
        cs.w_off = off;
        off += cs.weight_count();
        cs.b_off = off;
        off += static_cast<std::size_t>(cs.cout);
    }
    params_.assign(off, 0.f);
}

namespace {

// activation slot layout (see forward): input, 3 per encoder stage, 2
// bottleneck, 4 per decoder step, logits
inline int slot_enc(int s, int which) { return 1 + 3 * s + which; } // 0:conv1 1:conv2 2:pool
inline int slot_bott(int d, int which) { return 1 + 3 * d + which; }
inline int slot_dec(int d, int i, int which) { return 3 + 3 * d + 4 * i + which; } // up,cat,c1,c2
inline int slot_logits(int d) { return 3 + 7 * d; }

} // namespace

void UNet::forward(const FrameSample& frame, UNetWorkspace& ws) const {
    if (!(frame.shape == working_))
        throw ShapeError("UNet::forward: frame is " + to_string(frame.shape) +
                         ", network works at " + to_string(working_));
    const int d = desc_.depth;
    const int h = working_.height, w = working_.width;
    ws.acts_.resize(static_cast<std::size_t>(slot_logits(d)) + 1);
    ws.argmax_.resize(static_cast<std::size_t>(d));
    if (ws.grad_.size() != params_.size()) ws.grad_.assign(params_.size(), 0.f);

    // interleaved rgb -> channel planes
    Tensor& x0 = ws.acts_[0];
    x0.resize(desc_.in_channels, h, w);
    const std::int64_t hw = working_.pixels();
    for (int c = 0; c < desc_.in_channels; ++c)
        for (std::int64_t i = 0; i < hw; ++i)
            x0.v[static_cast<std::size_t>(c) * hw + i] = frame.rgb[3 * i + c];

    auto conv = [&](int idx, const Tensor& x, Tensor& y, bool relu) {
        const ConvSpec& cs = convs_[static_cast<std::size_t>(idx)];
        const int hw2 = x.h * x.w;
        y.resize(cs.cout, x.h, x.w);
        CMapMat Wm(params_.data() + cs.w_off, cs.cout, cs.cin * cs.k * cs.k);
        MapMat Ym(y.v.data(), cs.cout, hw2);
        if (cs.k == 1) {
            CMapMat Xm(x.v.data(), cs.cin, hw2);
            Ym.noalias() = Wm * Xm;
        } else {
            const int tile = rows_per_tile(x.w);
            ws.col_.resize(static_cast<std::size_t>(cs.cin) * 9 * std::min(x.h, tile) * x.w);
            for (int y0 = 0; y0 < x.h; y0 += tile) {
                const int y1 = std::min(x.h, y0 + tile);
                im2col3(x.v.data(), cs.cin, x.h, x.w, y0, y1, ws.col_.data());
                const int cw = (y1 - y0) * x.w;
                CMapMat Cm(ws.col_.data(), cs.cin * 9, cw);
                Ym.block(0, y0 * x.w, cs.cout, cw).noalias() = Wm * Cm;
            }
        }
        const float* b = params_.data() + cs.b_off;
        for (int c = 0; c < cs.cout; ++c) {
            float* row = y.v.data() + static_cast<std::size_t>(c) * hw2;
            for (int i = 0; i < hw2; ++i) {
                float v = row[i] + b[c];
                row[i] = relu ? std::max(v, 0.f) : v;
            }
        }
    };

    const Tensor* cur = &x0;
    for (int s = 0; s < d; ++s) {
        conv(2 * s, *cur, ws.acts_[slot_enc(s, 0)], true);
        conv(2 * s + 1, ws.acts_[slot_enc(s, 0)], ws.acts_[slot_enc(s, 1)], true);
        // 2x2 max pool, stride 2
        const Tensor& e = ws.acts_[slot_enc(s, 1)];
        Tensor& p = ws.acts_[slot_enc(s, 2)];
        p.resize(e.c, e.h / 2, e.w / 2);
        auto& amax = ws.argmax_[static_cast<std::size_t>(s)];
        amax.assign(p.size(), 0);
        for (int c = 0; c < e.c; ++c) {
            const float* src = e.v.data() + static_cast<std::size_t>(c) * e.h * e.w;
            float* dst = p.v.data() + static_cast<std::size_t>(c) * p.h * p.w;
            int* am = amax.data() + static_cast<std::size_t>(c) * p.h * p.w;
            for (int y = 0; y < p.h; ++y)
                for (int x = 0; x < p.w; ++x) {
                    int best = (2 * y) * e.w + 2 * x;
                    float bv = src[best];
                    const int cands[3] = {(2 * y) * e.w + 2 * x + 1, (2 * y + 1) * e.w + 2 * x,
                                          (2 * y + 1) * e.w + 2 * x + 1};
                    for (int cand : cands)
                        if (src[cand] > bv) {
                            bv = src[cand];
                            best = cand;
                        }
                    dst[y * p.w + x] = bv;
                    am[y * p.w + x] = best;
                }
        }
        cur = &p;
    }

    conv(2 * d, *cur, ws.acts_[slot_bott(d, 0)], true);
    conv(2 * d + 1, ws.acts_[slot_bott(d, 0)], ws.acts_[slot_bott(d, 1)], true);
    cur = &ws.acts_[slot_bott(d, 1)];

    for (int i = 0; i < d; ++i) {
        const int s = d - 1 - i;
        Tensor& up = ws.acts_[slot_dec(d, i, 0)];
        upsample2_forward(*cur, up);
        const Tensor& skip = ws.acts_[slot_enc(s, 1)];
        Tensor& cat = ws.acts_[slot_dec(d, i, 1)];
        cat.resize(up.c + skip.c, up.h, up.w);
        std::memcpy(cat.v.data(), up.v.data(), up.size() * sizeof(float));
        std::memcpy(cat.v.data() + up.size(), skip.v.data(), skip.size() * sizeof(float));
        conv(2 * d + 2 + 2 * i, cat, ws.acts_[slot_dec(d, i, 2)], true);
        conv(2 * d + 3 + 2 * i, ws.acts_[slot_dec(d, i, 2)], ws.acts_[slot_dec(d, i, 3)], true);
        cur = &ws.acts_[slot_dec(d, i, 3)];
    }

    conv(4 * d + 2, *cur, ws.acts_[slot_logits(d)], false);
    const Tensor& z = ws.acts_[slot_logits(d)];
    ws.pred_.resize(1, h, w);
    // outputs are strictly inside (0,1); the clamp also keeps the sigmoid
    // derivative alive so saturated pixels stay recoverable
    constexpr float kEps = 1e-4f;
    for (std::size_t i = 0; i < z.size(); ++i)
        ws.pred_.v[i] = std::clamp(1.f / (1.f + std::exp(-z.v[i])), kEps, 1.f - kEps);
}

void UNet::backward(std::span<const float> dloss_dpred, UNetWorkspace& ws) const {
    const int d = desc_.depth;
    if (ws.acts_.empty() || ws.pred_.size() == 0)
        throw Error("UNet::backward called without a preceding forward");
    if (dloss_dpred.size() != ws.pred_.size())
        throw ShapeError("UNet::backward: gradient size mismatch");

    // gradient tape mirrors the activation tape
    std::vector<Tensor> g(ws.acts_.size());
    for (std::size_t i = 0; i < g.size(); ++i)
        g[i].resize(ws.acts_[i].c, ws.acts_[i].h, ws.acts_[i].w);

    // through the sigmoid
    Tensor& gz = g[static_cast<std::size_t>(slot_logits(d))];
    for (std::size_t i = 0; i < gz.size(); ++i) {
        const float p = ws.pred_.v[i];
        gz.v[i] = dloss_dpred[i] * p * (1.f - p);
    }

    auto conv_bw = [&](int idx, const Tensor& x, const Tensor& y, Tensor& dy, Tensor* dx,
                       bool relu) {
        const ConvSpec& cs = convs_[static_cast<std::size_t>(idx)];
        const int hw2 = x.h * x.w;
        if (relu)
            for (std::size_t i = 0; i < dy.size(); ++i)
                if (y.v[i] <= 0.f) dy.v[i] = 0.f;
        float* gw = ws.grad_.data() + cs.w_off;
        float* gb = ws.grad_.data() + cs.b_off;
        for (int c = 0; c < cs.cout; ++c) {
            const float* row = dy.v.data() + static_cast<std::size_t>(c) * hw2;
            double s = 0.0;
            for (int i = 0; i < hw2; ++i) s += row[i];
            gb[c] += static_cast<float>(s);
        }
        CMapMat Wm(params_.data() + cs.w_off, cs.cout, cs.cin * cs.k * cs.k);
        MapMat dWm(gw, cs.cout, cs.cin * cs.k * cs.k);
        CMapMat dYm(dy.v.data(), cs.cout, hw2);
        if (cs.k == 1) {
            CMapMat Xm(x.v.data(), cs.cin, hw2);
            dWm.noalias() += dYm * Xm.transpose();
            if (dx) {
                MapMat dXm(dx->v.data(), cs.cin, hw2);
                dXm.noalias() += Wm.transpose() * dYm;
            }
        } else {
            const int tile = rows_per_tile(x.w);
            ws.col_.resize(static_cast<std::size_t>(cs.cin) * 9 * std::min(x.h, tile) * x.w);
            ws.dcol_.resize(ws.col_.size());
            for (int y0 = 0; y0 < x.h; y0 += tile) {
                const int y1 = std::min(x.h, y0 + tile);
                im2col3(x.v.data(), cs.cin, x.h, x.w, y0, y1, ws.col_.data());
                const int cw = (y1 - y0) * x.w;
                CMapMat Cm(ws.col_.data(), cs.cin * 9, cw);
                dWm.noalias() += dYm.block(0, y0 * x.w, cs.cout, cw) * Cm.transpose();
                if (dx) {
                    MapMat dCm(ws.dcol_.data(), cs.cin * 9, cw);
                    dCm.noalias() = Wm.transpose() * dYm.block(0, y0 * x.w, cs.cout, cw);
                    col2im3_add(ws.dcol_.data(), cs.cin, x.h, x.w, y0, y1, dx->v.data());
                }
            }
        }
    };

    // head (no relu)
    conv_bw(4 * d + 2, ws.acts_[slot_dec(d, d - 1, 3)], ws.acts_[slot_logits(d)], gz,
            &g[static_cast<std::size_t>(slot_dec(d, d - 1, 3))], false);

    for (int i = d - 1; i >= 0; --i) {
        const int s = d - 1 - i;
        conv_bw(2 * d + 3 + 2 * i, ws.acts_[slot_dec(d, i, 2)], ws.acts_[slot_dec(d, i, 3)],
                g[static_cast<std::size_t>(slot_dec(d, i, 3))],
                &g[static_cast<std::size_t>(slot_dec(d, i, 2))], true);
        conv_bw(2 * d + 2 + 2 * i, ws.acts_[slot_dec(d, i, 1)], ws.acts_[slot_dec(d, i, 2)],
                g[static_cast<std::size_t>(slot_dec(d, i, 2))],
                &g[static_cast<std::size_t>(slot_dec(d, i, 1))], true);
        // split the concat gradient into the upsampled part and the skip part
        Tensor& gcat = g[static_cast<std::size_t>(slot_dec(d, i, 1))];
        Tensor& gup = g[static_cast<std::size_t>(slot_dec(d, i, 0))];
        Tensor& gskip = g[static_cast<std::size_t>(slot_enc(s, 1))];
        std::memcpy(gup.v.data(), gcat.v.data(), gup.size() * sizeof(float));
        const float* skip_part = gcat.v.data() + gup.size();
        for (std::size_t k = 0; k < gskip.size(); ++k) gskip.v[k] += skip_part[k];
        Tensor& gprev = (i == 0) ? g[static_cast<std::size_t>(slot_bott(d, 1))]
                                 : g[static_cast<std::size_t>(slot_dec(d, i - 1, 3))];
        upsample2_backward(gup, gprev);
    }

    conv_bw(2 * d + 1, ws.acts_[slot_bott(d, 0)], ws.acts_[slot_bott(d, 1)],
            g[static_cast<std::size_t>(slot_bott(d, 1))],
            &g[static_cast<std::size_t>(slot_bott(d, 0))], true);
    conv_bw(2 * d, ws.acts_[slot_enc(d - 1, 2)], ws.acts_[slot_bott(d, 0)],
            g[static_cast<std::size_t>(slot_bott(d, 0))],
            &g[static_cast<std::size_t>(slot_enc(d - 1, 2))], true);

    for (int s = d - 1; s >= 0; --s) {
        // pool backward into the (already skip-loaded) conv2 gradient
        const Tensor& gp = g[static_cast<std::size_t>(slot_enc(s, 2))];
        Tensor& ge = g[static_cast<std::size_t>(slot_enc(s, 1))];
        const auto& amax = ws.argmax_[static_cast<std::size_t>(s)];
        for (int c = 0; c < gp.c; ++c) {
            const float* src = gp.v.data() + static_cast<std::size_t>(c) * gp.h * gp.w;
            float* dst = ge.v.data() + static_cast<std::size_t>(c) * ge.h * ge.w;
            const int* am = amax.data() + static_cast<std::size_t>(c) * gp.h * gp.w;
            const int n = gp.h * gp.w;
            for (int k = 0; k < n; ++k) dst[am[k]] += src[k];
        }
        conv_bw(2 * s + 1, ws.acts_[slot_enc(s, 0)], ws.acts_[slot_enc(s, 1)],
                g[static_cast<std::size_t>(slot_enc(s, 1))],
                &g[static_cast<std::size_t>(slot_enc(s, 0))], true);
        const Tensor& xin = (s == 0) ? ws.acts_[0] : ws.acts_[slot_enc(s - 1, 2)];
        Tensor* dxin = (s == 0) ? nullptr : &g[static_cast<std::size_t>(slot_enc(s - 1, 2))];
        conv_bw(2 * s, xin, ws.acts_[slot_enc(s, 0)], g[static_cast<std::size_t>(slot_enc(s, 0))],
                dxin, true);
    }
}

ProbMap UNet::predict(const FrameSample& frame) const {
    UNetWorkspace ws;
    forward(frame, ws);
    ProbMap out(working_);
    auto p = ws.prediction();
    std::copy(p.begin(), p.end(), out.values.begin());
    return out;
}

AdamOptimizer::AdamOptimizer(std::size_t n, double lr, double beta1, double beta2, double eps)
    : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps), m_(n, 0.0), v_(n, 0.0) {}

void AdamOptimizer::step(std::span<float> params, std::span<const float> grad) {
    if (params.size() != m_.size() || grad.size() != m_.size())
        throw ShapeError("AdamOptimizer: parameter/gradient size mismatch");
    ++t_;
    const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (std::size_t i = 0; i < m_.size(); ++i) {
        const double gi = grad[i];
        m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * gi;
        v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * gi * gi;
        const double mh = m_[i] / c1;
        const double vh = v_[i] / c2;
        params[i] -= static_cast<float>(lr_ * mh / (std::sqrt(vh) + eps_));
    }
}

namespace {
constexpr char kCheckpointMagic[] = "SDSEGCK1\n";
}

void save_checkpoint(const std::filesystem::path& path, const UNet& net,
                     const std::string& config_json) {
    nlohmann::json header;
    header["format"] = "sdseg-checkpoint-v1";
    header["descriptor"] = {{"in_channels", net.desc_.in_channels},
                            {"depth", net.desc_.depth},
                            {"base_width", net.desc_.base_width}};
    header["working"] = {{"height", net.working_.height}, {"width", net.working_.width}};
    header["param_count"] = net.params_.size();
    header["weights_hash"] = net.parameter_hash();
    header["config"] = config_json;
    const std::string hs = header.dump();

    if (!path.parent_path().empty()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot open checkpoint for writing: " + path.string());
    out.write(kCheckpointMagic, sizeof(kCheckpointMagic) - 1);
    const std::uint64_t len = hs.size();
    out.write(reinterpret_cast<const char*>(&len), sizeof(len));
    out.write(hs.data(), static_cast<std::streamsize>(hs.size()));
    out.write(reinterpret_cast<const char*>(net.params_.data()),
              static_cast<std::streamsize>(net.params_.size() * sizeof(float)));
    if (!out) throw DataError("failed writing checkpoint: " + path.string());
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open checkpoint: " + path.string());
    char magic[sizeof(kCheckpointMagic) - 1];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0)
        throw DataError("not a checkpoint file: " + path.string());
    std::uint64_t len = 0;
    in.read(reinterpret_cast<char*>(&len), sizeof(len));
    std::string hs(len, '\0');
    in.read(hs.data(), static_cast<std::streamsize>(len));
    if (!in) throw DataError("truncated checkpoint header: " + path.string());
    nlohmann::json header = nlohmann::json::parse(hs, nullptr, false);
    if (header.is_discarded()) throw DataError("corrupt checkpoint header: " + path.string());

    UNetDescriptor desc;
    desc.in_channels = header["descriptor"]["in_channels"].get<int>();
    desc.depth = header["descriptor"]["depth"].get<int>();
    desc.base_width = header["descriptor"]["base_width"].get<int>();
    ImageShape working{header["working"]["height"].get<int>(),
                       header["working"]["width"].get<int>()};
    UNet net(desc, working, 0);
    const auto n = header["param_count"].get<std::size_t>();
    if (n != net.parameter_count())
        throw DataError("checkpoint parameter count mismatch: " + path.string());
    in.read(reinterpret_cast<char*>(net.parameters().data()),
            static_cast<std::streamsize>(n * sizeof(float)));
    if (!in) throw DataError("truncated checkpoint weights: " + path.string());
    if (header.contains("weights_hash") &&
        header["weights_hash"].get<std::uint64_t>() != net.parameter_hash())
        throw DataError("checkpoint weight hash mismatch: " + path.string());
    return LoadedCheckpoint{std::move(net), header.value("config", std::string())};
}

} // namespace sdseg
