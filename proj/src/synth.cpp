#include "cqr/synth.h"

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <stdexcept>
#include <tuple>
#include <type_traits>
#include <unordered_set>

#include "cqr/text.h"

namespace cqr {

std::uint64_t SplitMix64::next() {
  std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

double SplitMix64::uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

std::uint64_t SplitMix64::below(std::uint64_t n) {
  if (n == 0) throw std::invalid_argument("below(0)");
  const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
  std::uint64_t x;
  do {
    x = next();
  } while (x >= limit);
  return x % n;
}

std::uint64_t derive_seed(std::uint64_t base, std::string_view label, std::uint64_t index) {
  std::uint64_t h = 14695981039346656037ULL;
  for (char c : label) {
    h ^= static_cast<unsigned char>(c);
    h *= 1099511628211ULL;
  }
  SplitMix64 mix(base ^ h);
  mix.next();
  SplitMix64 out(mix.next() + index * 0xd1b54a32d192ed03ULL);
  return out.next();
}

ZipfSampler::ZipfSampler(std::size_t n, double exponent) {
  if (n == 0) throw std::invalid_argument("Zipf sampler needs at least one rank");
  if (!(exponent > 0)) throw std::invalid_argument("Zipf exponent must be positive");
  cumulative_.resize(n);
  double total = 0.0;
  for (std::size_t r = 0; r < n; ++r) {
    total += std::pow(static_cast<double>(r + 1), -exponent);
    cumulative_[r] = total;
  }
  for (double& c : cumulative_) c /= total;
  cumulative_.back() = 1.0;
}

std::size_t ZipfSampler::sample(SplitMix64& rng) const {
  const double u = rng.uniform();
  return static_cast<std::size_t>(std::upper_bound(cumulative_.begin(), cumulative_.end(), u) -
                                  cumulative_.begin());
}

double ZipfSampler::probability(std::size_t rank) const {
  return rank == 0 ? cumulative_[0] : cumulative_[rank] - cumulative_[rank - 1];
}

// ---------------------------------------------------------------------------
// Config

namespace {

struct ConfigField {
  std::string_view key;
  std::function<std::string(const WorldConfig&)> get;
  std::function<void(WorldConfig&, std::string_view)> set;
};

template <typename T>
ConfigField field(std::string_view key, T WorldConfig::*member) {
  ConfigField f{key, nullptr, nullptr};
  f.get = [member](const WorldConfig& c) {
    if constexpr (std::is_floating_point_v<T>) {
      return format_double(c.*member);
    } else {
      return std::to_string(c.*member);
    }
  };
  f.set = [member, key](WorldConfig& c, std::string_view v) {
    if constexpr (std::is_floating_point_v<T>) {
      c.*member = parse_double(v);
    } else if constexpr (std::is_unsigned_v<T>) {
      const long long x = parse_int(v);
      if (x < 0) throw std::invalid_argument(std::string(key) + " must be non-negative");
      c.*member = static_cast<T>(x);
    } else {
      c.*member = static_cast<T>(parse_int(v));
    }
  };
  return f;
}

const std::vector<ConfigField>& config_fields() {
  static const std::vector<ConfigField> fields = {
      field("seed", &WorldConfig::seed),
      field("num_users", &WorldConfig::num_users),
      field("num_clusters", &WorldConfig::num_clusters),
      field("num_songs", &WorldConfig::num_songs),
      field("num_artists", &WorldConfig::num_artists),
      field("num_albums", &WorldConfig::num_albums),
      field("num_videos", &WorldConfig::num_videos),
      field("num_books", &WorldConfig::num_books),
      field("num_shopping_items", &WorldConfig::num_shopping_items),
      field("num_genres", &WorldConfig::num_genres),
      field("num_apps", &WorldConfig::num_apps),
      field("num_cities", &WorldConfig::num_cities),
      field("num_device_names", &WorldConfig::num_device_names),
      field("num_routine_names", &WorldConfig::num_routine_names),
      field("num_contact_names", &WorldConfig::num_contact_names),
      field("prefix_sibling_fraction", &WorldConfig::prefix_sibling_fraction),
      field("pool_songs", &WorldConfig::pool_songs),
      field("pool_artists", &WorldConfig::pool_artists),
      field("pool_videos", &WorldConfig::pool_videos),
      field("pool_other", &WorldConfig::pool_other),
      field("familiar_fraction", &WorldConfig::familiar_fraction),
      field("cluster_mass", &WorldConfig::cluster_mass),
      field("zipf_exponent", &WorldConfig::zipf_exponent),
      field("weeks_history", &WorldConfig::weeks_history),
      field("weeks_eval", &WorldConfig::weeks_eval),
      field("start_timestamp", &WorldConfig::start_timestamp),
      field("sessions_per_week", &WorldConfig::sessions_per_week),
      field("max_turns_per_session", &WorldConfig::max_turns_per_session),
      field("class_b_share", &WorldConfig::class_b_share),
      field("defect_probability", &WorldConfig::defect_probability),
      field("rephrase_probability", &WorldConfig::rephrase_probability),
      field("system_rewrite_share", &WorldConfig::system_rewrite_share),
      field("novel_probability", &WorldConfig::novel_probability),
      field("asr_variants", &WorldConfig::asr_variants),
      field("name_error_share", &WorldConfig::name_error_share),
      field("entity_swap_share", &WorldConfig::entity_swap_share),
  };
  return fields;
}

void require(bool ok, const char* what) {
  if (!ok) throw std::invalid_argument(std::string("world config: ") + what);
}

bool is_probability(double p) { return p >= 0.0 && p <= 1.0; }

}  // namespace

void WorldConfig::validate() const {
  require(num_users >= 1, "num_users must be >= 1");
  require(num_clusters >= 1, "num_clusters must be >= 1");
  require(num_clusters <= num_users, "num_clusters must not exceed num_users");
  require(num_songs >= 1 && num_artists >= 1 && num_videos >= 1, "songs, artists and videos must be >= 1");
  require(num_genres >= 1 && num_apps >= 1 && num_cities >= 1, "genres, apps and cities must be >= 1");
  require(pool_songs >= 1 && pool_videos >= 1, "pool sizes must be >= 1");
  require(pool_songs <= num_songs && pool_artists <= num_artists && pool_videos <= num_videos,
          "pool sizes must not exceed entity counts");
  require(pool_other <= num_books + num_shopping_items, "pool_other exceeds books + shopping items");
  require(weeks_history >= 1 && weeks_eval >= 1, "weeks must be >= 1");
  require(sessions_per_week >= 1 && max_turns_per_session >= 1, "sessions and turns must be >= 1");
  require(asr_variants >= 1, "asr_variants must be >= 1");
  require(zipf_exponent > 0.0, "zipf_exponent must be > 0");
  for (double p : {prefix_sibling_fraction, familiar_fraction, cluster_mass, class_b_share,
                   defect_probability, rephrase_probability, system_rewrite_share, novel_probability,
                   name_error_share, entity_swap_share}) {
    require(is_probability(p), "probabilities must lie in [0, 1]");
  }
}

std::vector<std::pair<std::string, std::string>> world_config_items(const WorldConfig& config) {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& f : config_fields()) out.emplace_back(std::string(f.key), f.get(config));
  return out;
}

bool set_world_config_item(WorldConfig& config, std::string_view key, std::string_view value) {
  for (const auto& f : config_fields()) {
    if (f.key == key) {
      f.set(config, value);
      return true;
    }
  }
  return false;
}

// ---------------------------------------------------------------------------
// World

namespace {

constexpr std::string_view kConsonants = "bdfgklmnprstvz";
constexpr std::string_view kVowels = "aeiou";

std::string make_word(SplitMix64& rng) {
  const std::size_t syllables = 2 + rng.below(2);
  std::string w;
  for (std::size_t i = 0; i < syllables; ++i) {
    w += kConsonants[rng.below(kConsonants.size())];
    w += kVowels[rng.below(kVowels.size())];
  }
  return w;
}

class NameMaker {
 public:
  explicit NameMaker(SplitMix64& rng) : rng_(rng) {}

  std::string fresh(std::size_t min_words, std::size_t max_words) {
    for (;;) {
      const std::size_t n = min_words + rng_.below(max_words - min_words + 1);
      std::string name;
      for (std::size_t i = 0; i < n; ++i) {
        if (i) name += ' ';
        name += make_word(rng_);
      }
      if (used_.insert(name).second) return name;
    }
  }

  std::string extend(const std::string& base) {
    for (;;) {
      std::string name = base + ' ' + make_word(rng_);
      if (used_.insert(name).second) return name;
    }
  }

 private:
  SplitMix64& rng_;
  std::unordered_set<std::string> used_;
};

std::string entity_id(std::string_view prefix, std::size_t n) {
  std::string digits = std::to_string(n + 1);
  if (digits.size() < 4) digits.insert(0, 4 - digits.size(), '0');
  return std::string(prefix) + "-" + digits;
}

std::string user_id_for(std::size_t u, std::size_t total) {
  std::string digits = std::to_string(u + 1);
  const std::size_t width = std::max<std::size_t>(4, std::to_string(total).size());
  if (digits.size() < width) digits.insert(0, width - digits.size(), '0');
  return "u" + digits;
}

// ClassA entities are drawn per group.
enum Group : std::size_t { kMusicGroup, kVideoGroup, kOtherGroup, kNumGroups };
constexpr std::array<double, kNumGroups> kGroupWeight = {0.5, 0.35, 0.15};

Group group_of(EntityType t) {
  switch (t) {
    case EntityType::kSong:
    case EntityType::kArtist:
    case EntityType::kAlbum:
      return kMusicGroup;
    case EntityType::kVideo:
      return kVideoGroup;
    default:
      return kOtherGroup;
  }
}

// Indices of entities of `type`, in creation order.
std::vector<std::size_t> of_type(const SyntheticWorld& w, EntityType type) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < w.entities.size(); ++i) {
    if (w.entities[i].type == type) out.push_back(i);
  }
  return out;
}

void shuffle(std::vector<std::size_t>& v, SplitMix64& rng) {
  for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[rng.below(i)]);
}

// k distinct elements of `from`, uniformly.
std::vector<std::size_t> pick_distinct(const std::vector<std::size_t>& from, std::size_t k, SplitMix64& rng) {
  auto copy = from;
  shuffle(copy, rng);
  copy.resize(std::min(k, copy.size()));
  return copy;
}

// k distinct elements of a popularity-ordered list, Zipf-weighted.
std::vector<std::size_t> pick_popular(const std::vector<std::size_t>& ranked, std::size_t k, double s,
                                      SplitMix64& rng) {
  std::vector<std::size_t> out;
  if (ranked.empty()) return out;
  ZipfSampler z(ranked.size(), s);
  std::set<std::size_t> seen;
  k = std::min(k, ranked.size());
  while (out.size() < k) {
    const auto e = ranked[z.sample(rng)];
    if (seen.insert(e).second) out.push_back(e);
  }
  return out;
}

struct GroupLists {
  std::array<std::vector<std::size_t>, kNumGroups> ranked;  // by global popularity
};

GroupLists group_lists(const SyntheticWorld& w) {
  GroupLists g;
  for (auto e : w.popularity) g.ranked[group_of(w.entities[e].type)].push_back(e);
  return g;
}

}  // namespace

SyntheticWorld generate_world(const WorldConfig& config) {
  config.validate();
  SyntheticWorld w;
  w.config = config;
  SplitMix64 rng(derive_seed(config.seed, "world"));
  NameMaker names(rng);

  auto add = [&](EntityType type, Domain domain, std::string_view prefix, std::size_t n, std::string name) {
    w.entities.push_back({entity_id(prefix, n), std::move(name), type, domain, 0});
    return w.entities.size() - 1;
  };
  // Artists and videos get occasional prefix siblings.
  auto add_with_siblings = [&](EntityType type, Domain domain, std::string_view prefix, std::size_t count,
                               std::size_t min_words, std::size_t max_words) {
    std::size_t n = 0;
    while (n < count) {
      auto base = names.fresh(min_words, max_words);
      const bool sibling = n + 1 < count && rng.chance(config.prefix_sibling_fraction);
      add(type, domain, prefix, n++, base);
      if (sibling) add(type, domain, prefix, n++, names.extend(base));
    }
  };

  add_with_siblings(EntityType::kArtist, Domain::kMusic, "artist", config.num_artists, 1, 2);
  const auto artists = of_type(w, EntityType::kArtist);
  for (std::size_t i = 0; i < config.num_songs; ++i) {
    auto e = add(EntityType::kSong, Domain::kMusic, "song", i, names.fresh(1, 3));
    w.entities[e].artist = artists[rng.below(artists.size())];
  }
  for (std::size_t i = 0; i < config.num_albums; ++i) {
    auto e = add(EntityType::kAlbum, Domain::kMusic, "album", i, names.fresh(1, 3));
    w.entities[e].artist = artists[rng.below(artists.size())];
  }
  add_with_siblings(EntityType::kVideo, Domain::kVideo, "video", config.num_videos, 1, 3);
  for (std::size_t i = 0; i < config.num_books; ++i) {
    add(EntityType::kBook, Domain::kOther, "book", i, names.fresh(1, 3));
  }
  for (std::size_t i = 0; i < config.num_shopping_items; ++i) {
    add(EntityType::kShoppingItem, Domain::kOther, "item", i, names.fresh(1, 2));
  }
  for (std::size_t i = 0; i < config.num_genres; ++i) {
    add(EntityType::kGenre, Domain::kMusic, "genre", i, names.fresh(1, 1));
  }
  for (std::size_t i = 0; i < config.num_apps; ++i) {
    add(EntityType::kApp, Domain::kOther, "app", i, names.fresh(1, 1));
  }
  for (std::size_t i = 0; i < config.num_cities; ++i) {
    add(EntityType::kCity, Domain::kOther, "city", i, names.fresh(1, 2));
  }
  for (std::size_t i = 0; i < config.num_device_names; ++i) {
    add(EntityType::kDeviceName, Domain::kOther, "device", i, names.fresh(1, 1) + " light");
  }
  for (std::size_t i = 0; i < config.num_routine_names; ++i) {
    add(EntityType::kRoutineName, Domain::kOther, "routine", i, names.fresh(1, 1) + " routine");
  }
  for (std::size_t i = 0; i < config.num_contact_names; ++i) {
    add(EntityType::kContactName, Domain::kOther, "contact", i, names.fresh(1, 1));
  }

  for (std::size_t i = 0; i < w.entities.size(); ++i) {
    if (entity_class(w.entities[i].type) == EntityClass::kA) w.popularity.push_back(i);
  }
  shuffle(w.popularity, rng);

  // Cluster pools: uniform draws so clusters are distinct communities;
  // global popularity enters through the off-pool share of each user.
  std::vector<std::size_t> other_a = of_type(w, EntityType::kBook);
  for (auto e : of_type(w, EntityType::kShoppingItem)) other_a.push_back(e);
  w.cluster_pools.resize(config.num_clusters);
  for (auto& pool : w.cluster_pools) {
    for (auto [type, k] : {std::pair{EntityType::kSong, config.pool_songs},
                           std::pair{EntityType::kArtist, config.pool_artists},
                           std::pair{EntityType::kVideo, config.pool_videos}}) {
      for (auto e : pick_distinct(of_type(w, type), k, rng)) pool.push_back(e);
    }
    for (auto e : pick_distinct(other_a, config.pool_other, rng)) pool.push_back(e);
  }

  const auto ranked_b = [&](EntityType t) {
    auto v = of_type(w, t);
    shuffle(v, rng);
    return v;
  };
  const std::vector<std::pair<std::vector<std::size_t>, std::size_t>> class_b_choices = {
      {ranked_b(EntityType::kGenre), 2},      {ranked_b(EntityType::kApp), 2},
      {ranked_b(EntityType::kCity), 1},       {ranked_b(EntityType::kDeviceName), 2},
      {ranked_b(EntityType::kRoutineName), 1}, {ranked_b(EntityType::kContactName), 2},
  };

  w.users.resize(config.num_users);
  for (std::size_t u = 0; u < config.num_users; ++u) {
    auto& user = w.users[u];
    user.id = user_id_for(u, config.num_users);
    // Round-robin then shuffled keeps every cluster non-empty.
    user.cluster = u % config.num_clusters;
  }
  {
    std::vector<std::size_t> clusters(config.num_users);
    for (std::size_t u = 0; u < config.num_users; ++u) clusters[u] = w.users[u].cluster;
    shuffle(clusters, rng);
    for (std::size_t u = 0; u < config.num_users; ++u) w.users[u].cluster = clusters[u];
  }
  for (auto& user : w.users) {
    auto pool = w.cluster_pools[user.cluster];
    shuffle(pool, rng);
    // At least one familiar entity per group that the pool covers.
    std::array<bool, kNumGroups> has{};
    for (auto e : pool) {
      const auto g = group_of(w.entities[e].type);
      if (!has[g] || rng.chance(config.familiar_fraction)) {
        user.familiar.push_back(e);
        has[g] = true;
      } else {
        user.novel.push_back(e);
      }
    }
    std::sort(user.familiar.begin(), user.familiar.end());
    std::sort(user.novel.begin(), user.novel.end());
    for (const auto& [ranked, k] : class_b_choices) {
      for (auto e : pick_popular(ranked, k, config.zipf_exponent, rng)) user.class_b.push_back(e);
    }
    std::sort(user.class_b.begin(), user.class_b.end());
  }
  return w;
}

std::vector<double> SyntheticWorld::preference(std::size_t u) const {
  const auto& user = users.at(u);
  std::vector<double> p(entities.size(), 0.0);
  for (auto e : user.class_b) p[e] += config.class_b_share / static_cast<double>(user.class_b.size());

  const auto groups = group_lists(*this);
  for (std::size_t g = 0; g < kNumGroups; ++g) {
    std::vector<std::size_t> fam;
    for (auto e : user.familiar) {
      if (group_of(entities[e].type) == g) fam.push_back(e);
    }
    const double mass = (1.0 - config.class_b_share) * kGroupWeight[g];
    const double pool_mass = fam.empty() ? 0.0 : config.cluster_mass;
    if (!fam.empty()) {
      ZipfSampler z(fam.size(), config.zipf_exponent);
      for (std::size_t r = 0; r < fam.size(); ++r) p[fam[r]] += mass * pool_mass * z.probability(r);
    }
    const auto& ranked = groups.ranked[g];
    if (!ranked.empty()) {
      ZipfSampler z(ranked.size(), config.zipf_exponent);
      for (std::size_t r = 0; r < ranked.size(); ++r) p[ranked[r]] += mass * (1.0 - pool_mass) * z.probability(r);
    }
  }
  return p;
}

// ---------------------------------------------------------------------------
// Utterances

std::size_t template_count(EntityType type) {
  switch (type) {
    case EntityType::kSong:
    case EntityType::kArtist:
    case EntityType::kVideo:
      return 3;
    case EntityType::kCity:
    case EntityType::kContactName:
    case EntityType::kState:
      return 1;
    default:
      return 2;
  }
}

std::string render_utterance(const SyntheticWorld& world, std::size_t entity, std::size_t variant) {
  const auto& e = world.entities.at(entity);
  const std::string& n = e.name;
  variant %= template_count(e.type);
  switch (e.type) {
    case EntityType::kSong: {
      const auto& artist = world.entities[e.artist].name;
      if (variant == 0) return "play " + n;
      if (variant == 1) return "play " + n + " by " + artist;
      return "play the song " + n;
    }
    case EntityType::kArtist:
      if (variant == 0) return "play " + n;
      if (variant == 1) return "play songs by " + n;
      return "play music by " + n;
    case EntityType::kAlbum:
      if (variant == 0) return "play the album " + n;
      return "play " + n + " by " + world.entities[e.artist].name;
    case EntityType::kVideo:
      if (variant == 0) return "play " + n;
      if (variant == 1) return "watch " + n;
      return "put on " + n;
    case EntityType::kBook:
      return variant == 0 ? "read " + n : "play the book " + n;
    case EntityType::kShoppingItem:
      return variant == 0 ? "buy " + n : "order " + n;
    case EntityType::kGenre:
      return variant == 0 ? "play " + n + " music" : "play some " + n;
    case EntityType::kApp:
      return variant == 0 ? "open " + n : "launch " + n;
    case EntityType::kCity:
    case EntityType::kState:
      return "what's the weather in " + n;
    case EntityType::kDeviceName:
      return variant == 0 ? "turn on the " + n : "turn off the " + n;
    case EntityType::kRoutineName:
      return variant == 0 ? "start " + n : "run " + n;
    case EntityType::kContactName:
      return "call " + n;
  }
  return n;
}

// ---------------------------------------------------------------------------
// ASR corruption

namespace {

constexpr std::array<std::string_view, 10> kPhoneticGroups = {"bp", "dt", "gkc", "fv", "sz",
                                                              "mn", "ae", "iy", "ou", "lr"};

std::string_view phonetic_group(char c) {
  for (auto g : kPhoneticGroups) {
    if (g.find(c) != std::string_view::npos) return g;
  }
  return {};
}

bool substitute(std::string& word, SplitMix64& rng) {
  std::vector<std::size_t> positions;
  for (std::size_t i = 0; i < word.size(); ++i) {
    if (!phonetic_group(word[i]).empty()) positions.push_back(i);
  }
  if (positions.empty()) return false;
  const auto i = positions[rng.below(positions.size())];
  const auto g = phonetic_group(word[i]);
  char c;
  do {
    c = g[rng.below(g.size())];
  } while (c == word[i]);
  word[i] = c;
  return true;
}

std::string join(const std::vector<std::string>& words) {
  std::string out;
  for (std::size_t i = 0; i < words.size(); ++i) {
    if (i) out += ' ';
    out += words[i];
  }
  return out;
}

}  // namespace

std::string asr_corrupt(std::string_view utterance, std::uint64_t seed) {
  const auto norm = normalize_utterance(utterance);
  if (norm.empty()) throw std::invalid_argument("cannot corrupt an empty utterance");
  SplitMix64 rng(derive_seed(seed, norm));

  std::vector<std::string> original;
  for (auto t : tokens(norm)) original.emplace_back(t);

  for (int attempt = 0; attempt < 32; ++attempt) {
    auto words = original;
    const std::size_t edits = 1 + rng.below(3);
    for (std::size_t k = 0; k < edits; ++k) {
      switch (rng.below(4)) {
        case 0:
          if (words.size() >= 2) words.erase(words.begin() + static_cast<std::ptrdiff_t>(rng.below(words.size())));
          break;
        case 1: {
          const auto i = rng.below(words.size());
          words.insert(words.begin() + static_cast<std::ptrdiff_t>(i), words[i]);
          break;
        }
        case 2:
          if (words.size() >= 2) {
            const auto i = rng.below(words.size() - 1);
            std::swap(words[i], words[i + 1]);
          }
          break;
        default:
          substitute(words[rng.below(words.size())], rng);
          break;
      }
    }
    auto out = join(words);
    if (out != norm && normalized_edit_distance(out, norm) <= 0.5) return out;
  }

  // Rare fallback: one character changed.
  auto words = original;
  for (auto& w : words) {
    if (substitute(w, rng)) return join(words);
  }
  auto out = norm;
  out.back() = out.back() == 'x' ? 'z' : 'x';
  return out;
}

std::string mishear_name(std::string_view name, std::uint64_t seed) {
  const auto norm = normalize_utterance(name);
  if (norm.empty()) throw std::invalid_argument("cannot mishear an empty name");
  SplitMix64 rng(derive_seed(seed, "name:" + norm));
  std::vector<std::string> words;
  for (auto t : tokens(norm)) words.emplace_back(t);
  const std::size_t edits = 1 + rng.below(2);
  for (std::size_t k = 0; k < edits; ++k) substitute(words[rng.below(words.size())], rng);
  auto out = join(words);
  if (out != norm) return out;
  for (auto& w : words) {
    if (substitute(w, rng) && join(words) != norm) return join(words);
  }
  out.back() = out.back() == 'x' ? 'z' : 'x';
  return out;
}

// ---------------------------------------------------------------------------
// Logs

std::int64_t history_end(const WorldConfig& config) {
  return config.start_timestamp + static_cast<std::int64_t>(config.weeks_history) * kSecondsPerWeek;
}

namespace {

struct TurnPicker {
  const SyntheticWorld& w;
  const GroupLists& groups;
  std::array<std::optional<ZipfSampler>, kNumGroups> global;

  TurnPicker(const SyntheticWorld& world, const GroupLists& g) : w(world), groups(g) {
    for (std::size_t i = 0; i < kNumGroups; ++i) {
      if (!g.ranked[i].empty()) global[i].emplace(g.ranked[i].size(), world.config.zipf_exponent);
    }
  }

  std::size_t pick(const SyntheticUser& user, bool eval_week, SplitMix64& rng) const {
    const auto& c = w.config;
    if (!user.class_b.empty() && rng.chance(c.class_b_share)) return user.class_b[rng.below(user.class_b.size())];
    // Group by weight.
    double u = rng.uniform();
    std::size_t g = 0;
    while (g + 1 < kNumGroups && u >= kGroupWeight[g]) u -= kGroupWeight[g++];
    if (groups.ranked[g].empty()) g = kMusicGroup;

    auto in_group = [&](const std::vector<std::size_t>& v) {
      std::vector<std::size_t> out;
      for (auto e : v) {
        if (group_of(w.entities[e].type) == g) out.push_back(e);
      }
      return out;
    };
    const auto fam = in_group(user.familiar);
    if (!fam.empty() && rng.chance(c.cluster_mass)) {
      if (eval_week && rng.chance(c.novel_probability)) {
        const auto nov = in_group(user.novel);
        if (!nov.empty()) return nov[rng.below(nov.size())];
      }
      ZipfSampler z(fam.size(), c.zipf_exponent);
      return fam[z.sample(rng)];
    }
    return groups.ranked[g][global[g]->sample(rng)];
  }
};

// Each user leans towards one phrasing per entity type.
std::size_t pick_variant(const SyntheticWorld& w, const SyntheticUser& user, std::size_t entity,
                         SplitMix64& rng) {
  const auto type = w.entities[entity].type;
  const auto n = template_count(type);
  const auto preferred = derive_seed(w.config.seed, user.id, static_cast<std::uint64_t>(type)) % n;
  return rng.chance(0.6) ? preferred : rng.below(n);
}

std::size_t wrong_entity(const SyntheticWorld& w, std::size_t entity, SplitMix64& rng) {
  const auto type = w.entities[entity].type;
  std::vector<std::size_t> same;
  for (std::size_t i = 0; i < w.entities.size(); ++i) {
    if (w.entities[i].type == type && i != entity) same.push_back(i);
  }
  return same.empty() ? entity : same[rng.below(same.size())];
}

// Index of the entity whose name extends `entity`'s by one word, if any.
std::optional<std::size_t> longer_sibling(const SyntheticWorld& w, std::size_t entity) {
  if (entity + 1 >= w.entities.size()) return std::nullopt;
  const auto& a = w.entities[entity];
  const auto& b = w.entities[entity + 1];
  if (a.type != b.type || b.name.size() <= a.name.size() + 1) return std::nullopt;
  if (b.name.compare(0, a.name.size(), a.name) != 0 || b.name[a.name.size()] != ' ') return std::nullopt;
  return entity + 1;
}

// Replaces the first whole-word occurrence of `name` in `text`.
std::string replace_name(const std::string& text, const std::string& name, const std::string& with) {
  for (std::size_t pos = text.find(name); pos != std::string::npos; pos = text.find(name, pos + 1)) {
    const auto end = pos + name.size();
    if ((pos == 0 || text[pos - 1] == ' ') && (end == text.size() || text[end] == ' ')) {
      return text.substr(0, pos) + with + text.substr(end);
    }
  }
  return text;
}

}  // namespace

SyntheticLogs generate_logs(const SyntheticWorld& world) {
  const auto& c = world.config;
  c.validate();
  const auto groups = group_lists(world);
  const TurnPicker picker(world, groups);
  const std::int64_t week = kSecondsPerWeek;
  const std::size_t weeks = c.weeks_history + c.weeks_eval;

  // Same-type alternatives for defective routing, computed once per type.
  SyntheticLogs logs;
  for (const auto& user : world.users) {
    SplitMix64 rng(derive_seed(c.seed, "logs:" + user.id));
    for (std::size_t wk = 0; wk < weeks; ++wk) {
      const bool eval_week = wk >= c.weeks_history;
      const std::int64_t week_start = c.start_timestamp + static_cast<std::int64_t>(wk) * week;
      std::vector<std::int64_t> starts;
      for (std::size_t s = 0; s < c.sessions_per_week; ++s) {
        // Leave room at the end of the week so sessions never spill over.
        starts.push_back(week_start + static_cast<std::int64_t>(rng.below(static_cast<std::uint64_t>(week - 4 * 3600))));
      }
      std::sort(starts.begin(), starts.end());
      for (std::size_t s = 0; s < starts.size(); ++s) {
        const std::string session = user.id + "-w" + std::to_string(wk) + "-s" + std::to_string(s);
        std::int64_t t = starts[s];
        const std::size_t turns = 1 + rng.below(c.max_turns_per_session);
        for (std::size_t k = 0; k < turns; ++k) {
          const auto e = picker.pick(user, eval_week, rng);
          const auto& ent = world.entities[e];
          const auto clean = normalize_utterance(render_utterance(world, e, pick_variant(world, user, e, rng)));

          LogRecord r;
          r.user_id = user.id;
          r.session_id = session;
          r.timestamp = t;
          r.entity_id = ent.id;
          r.entity_name = ent.name;
          r.entity_type = ent.type;
          r.domain = ent.domain;

          if (rng.chance(c.defect_probability)) {
            const auto sibling = longer_sibling(world, e);
            if (sibling && rng.chance(c.entity_swap_share)) {
              // Heard correctly, resolved to the longer name; the user
              // rephrases with another template.
              LogRecord bad = r;
              bad.utterance = clean;
              bad.entity_id = world.entities[*sibling].id;
              bad.entity_name = world.entities[*sibling].name;
              bad.defect_score = rng.uniform(0.6, 1.0);
              bad.barged_in = rng.chance(0.5);
              bad.terminated = rng.chance(0.3);
              logs.records.push_back(bad);
              if (rng.chance(c.rephrase_probability)) {
                const auto n = template_count(ent.type);
                auto again = normalize_utterance(render_utterance(world, e, pick_variant(world, user, e, rng) + 1 + rng.below(n)));
                if (normalized_edit_distance(again, clean) > 0.5) again = clean;
                t += 5 + static_cast<std::int64_t>(rng.below(56));
                r.timestamp = t;
                r.utterance = again;
                r.defect_score = rng.uniform(0.0, 0.3);
                logs.records.push_back(r);
                logs.planted.push_back({user.id, session, bad.timestamp, clean, again, ent.id});
              }
              t += 120 + static_cast<std::int64_t>(rng.below(480));
              continue;
            }
            const auto variant_seed = c.seed * 1000003ULL + rng.below(c.asr_variants);
            const auto corrupt = rng.chance(c.name_error_share)
                                     ? replace_name(clean, normalize_utterance(ent.name),
                                                    mishear_name(ent.name, variant_seed))
                                     : asr_corrupt(clean, variant_seed);
            if (rng.chance(c.system_rewrite_share)) {
              r.utterance = corrupt;
              r.rewrite_target = clean;
              r.defect_score = rng.uniform(0.0, 0.3);
              logs.records.push_back(r);
            } else {
              const auto wrong = wrong_entity(world, e, rng);
              LogRecord bad = r;
              bad.utterance = corrupt;
              bad.entity_id = world.entities[wrong].id;
              bad.entity_name = world.entities[wrong].name;
              bad.defect_score = rng.uniform(0.6, 1.0);
              bad.barged_in = rng.chance(0.5);
              bad.terminated = rng.chance(0.3);
              logs.records.push_back(bad);
              if (rng.chance(c.rephrase_probability)) {
                t += 5 + static_cast<std::int64_t>(rng.below(56));
                r.timestamp = t;
                r.utterance = clean;
                r.defect_score = rng.uniform(0.0, 0.3);
                logs.records.push_back(r);
                logs.planted.push_back({user.id, session, bad.timestamp, corrupt, clean, ent.id});
              }
            }
          } else {
            r.utterance = clean;
            r.defect_score = rng.chance(0.7) ? 0.0 : rng.uniform(0.0, 0.3);
            r.barged_in = rng.chance(0.03);
            r.terminated = rng.chance(0.02);
            logs.records.push_back(r);
          }
          // Ordinary turns are spaced beyond the rephrase window.
          t += 120 + static_cast<std::int64_t>(rng.below(480));
        }
      }
    }
  }
  std::stable_sort(logs.records.begin(), logs.records.end(), [](const LogRecord& a, const LogRecord& b) {
    return std::tie(a.user_id, a.timestamp) < std::tie(b.user_id, b.timestamp);
  });
  return logs;
}

void write_world_manifest(std::ostream& out, const SyntheticWorld& world, const SyntheticLogs& logs) {
  out << "cqr-world 1\n";
  for (const auto& [k, v] : world_config_items(world.config)) out << "config." << k << '=' << v << '\n';
  std::map<std::string, std::size_t> per_type;
  for (const auto& e : world.entities) ++per_type[std::string(to_string(e.type))];
  out << "users=" << world.users.size() << '\n';
  out << "clusters=" << world.cluster_pools.size() << '\n';
  out << "entities=" << world.entities.size() << '\n';
  for (const auto& [t, n] : per_type) out << "entities." << t << '=' << n << '\n';
  std::size_t defective = 0;
  std::size_t rewritten = 0;
  for (const auto& r : logs.records) {
    defective += is_defective(r.defect_score) ? 1 : 0;
    rewritten += r.rewrite_target ? 1 : 0;
  }
  out << "records=" << logs.records.size() << '\n';
  out << "records.defective=" << defective << '\n';
  out << "records.rewritten=" << rewritten << '\n';
  out << "planted_pairs=" << logs.planted.size() << '\n';
  out << "history_end=" << history_end(world.config) << '\n';
}

}  // namespace cqr
