#pragma once

// Attention masks for the training stages and post-training modes, the
// H-bridge layer schedule, and multiview 3D RoPE position assignment.
//
// Sequence order (non-AR):  text | cond | video (frame, view, token) | action (frame, slot)
// Sequence order (AR):      text | cond | clean video | noisy video | noisy action
// Clean past actions never appear in the AR sequence.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "wam/error.hpp"
#include "wam/matrix.hpp"

namespace wam::attention {

enum class MaskKind { Stage1, Stage2, NonAR_V2A, AR };

inline const char* to_string(MaskKind k) {
  switch (k) {
    case MaskKind::Stage1: return "stage1";
    case MaskKind::Stage2: return "stage2";
    case MaskKind::NonAR_V2A: return "v2a";
    case MaskKind::AR: return "ar";
  }
  return "?";
}

inline MaskKind mask_kind_from_string(const std::string& s) {
  if (s == "stage1") return MaskKind::Stage1;
  if (s == "stage2") return MaskKind::Stage2;
  if (s == "v2a" || s == "nonar_v2a") return MaskKind::NonAR_V2A;
  if (s == "ar") return MaskKind::AR;
  throw ValidationError("unknown mask kind '" + s + "' (expected stage1, stage2, v2a, ar)");
}

struct TokenLayout {
  int n_text = 0;
  int n_cond = 0;
  int frames_K = 0;
  int views_V = 1;
  int tokens_per_frame_per_view = 0;
  int actions_per_frame_Sa = 0;
  /// Exclusive end frame of each AR chunk; empty for non-AR layouts.
  std::vector<int> chunk_ends;

  /// Sa = f_va * tau: tau raw frames per latent frame, f_va actions per raw frame.
  static int actions_per_latent_frame(int f_va, int tau) {
    require(f_va >= 0 && tau >= 1, "actions_per_latent_frame: f_va >= 0 and tau >= 1 required");
    return f_va * tau;
  }

  int video_tokens() const { return frames_K * views_V * tokens_per_frame_per_view; }
  int action_tokens() const { return frames_K * actions_per_frame_Sa; }
  int num_chunks() const { return static_cast<int>(chunk_ends.size()); }

  int chunk_of_frame(int frame) const {
    for (int c = 0; c < num_chunks(); ++c)
      if (frame < chunk_ends[c]) return c;
    return -1;
  }

  void validate() const {
    require(n_text >= 0 && n_cond >= 0 && frames_K >= 0 && views_V >= 0 && tokens_per_frame_per_view >= 0 &&
                actions_per_frame_Sa >= 0,
            "TokenLayout: counts must be >= 0");
    if (!chunk_ends.empty()) {
      int prev = 0;
      for (int e : chunk_ends) {
        require(e > prev, "TokenLayout: chunk boundaries must be strictly increasing");
        prev = e;
      }
      require(prev == frames_K, "TokenLayout: chunk boundaries must cover all frames");
    }
  }

  /// 2 text, 1 cond, K=2, 1 view, 2 tokens/frame, Sa=2, chunks {[0,1), [1,2)}.
  static TokenLayout small() { return TokenLayout{2, 1, 2, 1, 2, 2, {1, 2}}; }
};

enum class TokenRole : std::uint8_t { Text, Cond, CleanVideo, Video, Action };

inline const char* to_string(TokenRole r) {
  switch (r) {
    case TokenRole::Text: return "text";
    case TokenRole::Cond: return "cond";
    case TokenRole::CleanVideo: return "clean_video";
    case TokenRole::Video: return "video";
    case TokenRole::Action: return "action";
  }
  return "?";
}

struct TokenInfo {
  TokenRole role;
  int frame = -1;  // -1 for text / cond
  int view = -1;
  int chunk = -1;  // AR chunk index, -1 otherwise
};

/// Flattened token sequence for a mask kind.
inline std::vector<TokenInfo> token_sequence(MaskKind kind, const TokenLayout& layout) {
  layout.validate();
  std::vector<TokenInfo> seq;
  for (int i = 0; i < layout.n_text; ++i) seq.push_back({TokenRole::Text});
  for (int i = 0; i < layout.n_cond; ++i) seq.push_back({TokenRole::Cond});
  const bool ar = kind == MaskKind::AR;
  auto chunk_of = [&](int f) { return ar ? layout.chunk_of_frame(f) : -1; };
  auto push_video = [&](TokenRole role) {
    for (int f = 0; f < layout.frames_K; ++f)
      for (int v = 0; v < layout.views_V; ++v)
        for (int t = 0; t < layout.tokens_per_frame_per_view; ++t) seq.push_back({role, f, v, chunk_of(f)});
  };
  if (ar) push_video(TokenRole::CleanVideo);
  push_video(TokenRole::Video);
  for (int f = 0; f < layout.frames_K; ++f)
    for (int a = 0; a < layout.actions_per_frame_Sa; ++a) seq.push_back({TokenRole::Action, f, -1, chunk_of(f)});
  return seq;
}

/// Boolean attendability matrix: allowed(q, k) means query q may attend key k.
class AttentionMask {
 public:
  AttentionMask() = default;
  AttentionMask(std::vector<TokenInfo> tokens, MaskKind kind)
      : tokens_(std::move(tokens)), kind_(kind), n_(tokens_.size()), bits_(n_ * n_, 0), participating_(n_, 1) {}

  std::size_t size() const { return n_; }
  MaskKind kind() const { return kind_; }
  const std::vector<TokenInfo>& tokens() const { return tokens_; }

  bool allowed(std::size_t q, std::size_t k) const { return bits_[q * n_ + k] != 0; }
  void set(std::size_t q, std::size_t k, bool v) { bits_[q * n_ + k] = v ? 1 : 0; }
  bool participating(std::size_t i) const { return participating_[i] != 0; }
  void set_participating(std::size_t i, bool v) { participating_[i] = v ? 1 : 0; }

  double density() const {
    if (n_ == 0) return 0.0;
    return static_cast<double>(std::count(bits_.begin(), bits_.end(), 1)) / static_cast<double>(bits_.size());
  }

  /// True when every pair allowed here is also allowed in `other`.
  bool subset_of(const AttentionMask& other) const {
    if (other.n_ != n_) return false;
    for (std::size_t i = 0; i < bits_.size(); ++i)
      if (bits_[i] && !other.bits_[i]) return false;
    return true;
  }

  bool operator==(const AttentionMask& o) const { return n_ == o.n_ && bits_ == o.bits_; }

 private:
  std::vector<TokenInfo> tokens_;
  MaskKind kind_ = MaskKind::Stage2;
  std::size_t n_ = 0;
  std::vector<std::uint8_t> bits_;
  std::vector<std::uint8_t> participating_;
};

struct MaskOptions {
  /// Keep the video-query/action-key restriction inside an AR chunk.
  bool v2a_within_ar_chunk = true;
};

namespace detail {

inline bool is_video(TokenRole r) { return r == TokenRole::Cond || r == TokenRole::Video || r == TokenRole::CleanVideo; }

inline bool stage2_rule(const TokenInfo&, const TokenInfo&) { return true; }

inline bool stage1_rule(const TokenInfo& q, const TokenInfo& k) {
  return q.role != TokenRole::Action && k.role != TokenRole::Action;
}

/// Nothing but action queries may read action keys.
inline bool v2a_rule(const TokenInfo& q, const TokenInfo& k) {
  return k.role != TokenRole::Action || q.role == TokenRole::Action;
}

inline bool ar_rule(const TokenInfo& q, const TokenInfo& k, const MaskOptions& opt) {
  const bool k_context = k.role == TokenRole::Text || k.role == TokenRole::Cond;
  switch (q.role) {
    case TokenRole::Text:
    case TokenRole::Cond:
      return k_context;
    case TokenRole::CleanVideo:
      // Teacher-forced observations: causal over chunks, including their own.
      return k_context || (k.role == TokenRole::CleanVideo && k.chunk <= q.chunk);
    case TokenRole::Video:
      if (k_context) return true;
      if (k.role == TokenRole::CleanVideo) return k.chunk < q.chunk;
      if (k.role == TokenRole::Video) return k.chunk == q.chunk;
      return !opt.v2a_within_ar_chunk && k.chunk == q.chunk;
    case TokenRole::Action:
      if (k_context) return true;
      if (k.role == TokenRole::CleanVideo) return k.chunk < q.chunk;
      return k.chunk == q.chunk;  // noisy video or action of the same chunk
  }
  return false;
}

inline bool decoupled_rule(const TokenInfo& q, const TokenInfo& k) {
  if (q.role == TokenRole::Text) return k.role == TokenRole::Text;
  if (k.role == TokenRole::Text) return true;
  return is_video(q.role) == is_video(k.role);
}

}  // namespace detail

inline AttentionMask build_mask(MaskKind kind, const TokenLayout& layout, const MaskOptions& opt = {}) {
  layout.validate();
  if (kind == MaskKind::AR) require(!layout.chunk_ends.empty(), "build_mask: AR mask requires chunk boundaries");
  AttentionMask m(token_sequence(kind, layout), kind);
  const auto& t = m.tokens();
  for (std::size_t q = 0; q < t.size(); ++q) {
    for (std::size_t k = 0; k < t.size(); ++k) {
      bool ok = false;
      switch (kind) {
        case MaskKind::Stage1: ok = detail::stage1_rule(t[q], t[k]); break;
        case MaskKind::Stage2: ok = detail::stage2_rule(t[q], t[k]); break;
        case MaskKind::NonAR_V2A: ok = detail::v2a_rule(t[q], t[k]); break;
        case MaskKind::AR: ok = detail::ar_rule(t[q], t[k], opt); break;
      }
      m.set(q, k, ok);
    }
    if (kind == MaskKind::Stage1 && t[q].role == TokenRole::Action) m.set_participating(q, false);
  }
  return m;
}

/// Mask for the H-bridge decoupled layers: no video/action interaction.
inline AttentionMask decoupled_mask(const TokenLayout& layout) {
  layout.validate();
  AttentionMask m(token_sequence(MaskKind::Stage2, layout), MaskKind::Stage2);
  const auto& t = m.tokens();
  for (std::size_t q = 0; q < t.size(); ++q)
    for (std::size_t k = 0; k < t.size(); ++k) m.set(q, k, detail::decoupled_rule(t[q], t[k]));
  return m;
}

// ---- H-bridge -------------------------------------------------------------------------

struct LayerSchedule {
  int depth = 0;
  std::vector<bool> joint_flags;

  int joint_count() const { return static_cast<int>(std::count(joint_flags.begin(), joint_flags.end(), true)); }
};

/// ceil(depth/4) decoupled layers at each end, joint attention in between.
inline LayerSchedule hbridge_schedule(int depth) {
  require(depth >= 4, "hbridge_schedule: depth must be >= 4");
  const int edge = (depth + 3) / 4;
  LayerSchedule s{depth, std::vector<bool>(static_cast<std::size_t>(depth), false)};
  for (int i = edge; i < depth - edge; ++i) s.joint_flags[i] = true;
  return s;
}

// ---- multiview 3D RoPE --------------------------------------------------------------------

struct Rope3DPosition {
  int temporal = 0;
  int spatial_h = 0;
  int spatial_w = 0;

  bool operator==(const Rope3DPosition&) const = default;
};

struct ViewOffset {
  int dh = 0;
  int dw = 0;
};

struct ViewGrid {
  int height = 0;
  int width = 0;
};

/// Views side by side along width with a gap of one view width.
inline std::vector<ViewOffset> default_view_offsets(int views, const ViewGrid& grid) {
  std::vector<ViewOffset> out;
  for (int v = 0; v < views; ++v) out.push_back({0, 2 * grid.width * v});
  return out;
}

/// Positions of the video tokens in sequence order (frame, view, row, col).
inline std::vector<Rope3DPosition> rope3d_assign(const TokenLayout& layout, const ViewGrid& grid,
                                                 const std::vector<ViewOffset>& offsets) {
  layout.validate();
  require(grid.height >= 1 && grid.width >= 1, "rope3d_assign: grid must be non-empty");
  require(grid.height * grid.width == layout.tokens_per_frame_per_view,
          "rope3d_assign: grid size does not match tokens per frame per view");
  require(static_cast<int>(offsets.size()) == layout.views_V, "rope3d_assign: need one offset per view");
  for (const auto& o : offsets) require(o.dh >= 0 && o.dw >= 0, "rope3d_assign: offsets must be nonnegative");
  for (std::size_t a = 0; a < offsets.size(); ++a)
    for (std::size_t b = a + 1; b < offsets.size(); ++b) {
      const bool h_overlap = std::abs(offsets[a].dh - offsets[b].dh) < grid.height;
      const bool w_overlap = std::abs(offsets[a].dw - offsets[b].dw) < grid.width;
      require(!(h_overlap && w_overlap), "rope3d_assign: spatial boxes of views " + std::to_string(a) + " and " +
                                             std::to_string(b) + " overlap");
    }
  std::vector<Rope3DPosition> pos;
  pos.reserve(static_cast<std::size_t>(layout.video_tokens()));
  for (int f = 0; f < layout.frames_K; ++f)
    for (int v = 0; v < layout.views_V; ++v)
      for (int r = 0; r < grid.height; ++r)
        for (int c = 0; c < grid.width; ++c) pos.push_back({f, r + offsets[v].dh, c + offsets[v].dw});
  return pos;
}

// ---- reference attention kernel ------------------------------------------------------------

struct AttentionOutput {
  Matrix values;
  std::vector<bool> empty_rows;  // queries with no allowed key (output zero)
};

/// Softmax attention where disallowed keys are skipped outright, so their
/// contents can never influence an output.
inline AttentionOutput masked_attention_reference(const Matrix& queries, const Matrix& keys, const Matrix& values,
                                                  const AttentionMask& mask) {
  require(queries.cols == keys.cols, "masked_attention_reference: query/key width mismatch");
  require(keys.rows == values.rows, "masked_attention_reference: keys/values row mismatch");
  require(mask.size() == keys.rows && queries.rows == keys.rows,
          "masked_attention_reference: mask must be square over the keys");
  const double scale = queries.cols ? 1.0 / std::sqrt(static_cast<double>(queries.cols)) : 1.0;
  AttentionOutput out{Matrix(queries.rows, values.cols), std::vector<bool>(queries.rows, false)};
  std::vector<double> logits(keys.rows);
  for (std::size_t q = 0; q < queries.rows; ++q) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < keys.rows; ++k) {
      if (!mask.allowed(q, k)) continue;
      double dot = 0.0;
      for (std::size_t c = 0; c < queries.cols; ++c) dot += queries(q, c) * keys(k, c);
      logits[k] = dot * scale;
      mx = std::max(mx, logits[k]);
    }
    if (mx == -std::numeric_limits<double>::infinity()) {
      out.empty_rows[q] = true;
      continue;
    }
    double denom = 0.0;
    for (std::size_t k = 0; k < keys.rows; ++k) {
      if (!mask.allowed(q, k)) continue;
      logits[k] = std::exp(logits[k] - mx);
      denom += logits[k];
    }
    for (std::size_t k = 0; k < keys.rows; ++k) {
      if (!mask.allowed(q, k)) continue;
      const double p = logits[k] / denom;
      for (std::size_t c = 0; c < values.cols; ++c) out.values(q, c) += p * values(k, c);
    }
  }
  return out;
}

// ---- export / summary ---------------------------------------------------------------------------
// Bitmap: '#' header line, then one line per query row, '1' allowed / '0' not.

inline void export_bitmap(std::ostream& os, const AttentionMask& m) {
  os << "# mask kind=" << to_string(m.kind()) << " n=" << m.size() << '\n';
  for (std::size_t q = 0; q < m.size(); ++q) {
    std::string row(m.size(), '0');
    for (std::size_t k = 0; k < m.size(); ++k)
      if (m.allowed(q, k)) row[k] = '1';
    os << row << '\n';
  }
}

/// Rows of a bitmap file, comment lines dropped.
inline std::vector<std::string> read_bitmap(std::istream& is) {
  std::vector<std::string> rows;
  std::string line;
  while (std::getline(is, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    rows.push_back(line);
  }
  for (const auto& r : rows) {
    require(r.size() == rows.size(), "bitmap is not square");
    require(r.find_first_not_of("01") == std::string::npos, "bitmap may only contain '0' and '1'");
  }
  return rows;
}

/// Per role-pair density table plus overall density.
inline std::string summarize(const AttentionMask& m) {
  std::map<std::pair<TokenRole, TokenRole>, std::pair<std::size_t, std::size_t>> blocks;
  std::vector<TokenRole> roles;
  for (const auto& t : m.tokens())
    if (std::find(roles.begin(), roles.end(), t.role) == roles.end()) roles.push_back(t.role);
  for (std::size_t q = 0; q < m.size(); ++q)
    for (std::size_t k = 0; k < m.size(); ++k) {
      auto& b = blocks[{m.tokens()[q].role, m.tokens()[k].role}];
      ++b.second;
      if (m.allowed(q, k)) ++b.first;
    }
  std::ostringstream os;
  os << "kind=" << to_string(m.kind()) << " tokens=" << m.size() << " density=" << m.density() << '\n';
  os << "query\\key";
  for (auto r : roles) os << '\t' << to_string(r);
  os << '\n';
  for (auto qr : roles) {
    os << to_string(qr);
    for (auto kr : roles) {
      const auto& b = blocks[{qr, kr}];
      os << '\t' << (b.second ? static_cast<double>(b.first) / static_cast<double>(b.second) : 0.0);
    }
    os << '\n';
  }
  return os.str();
}

}  // namespace wam::attention
