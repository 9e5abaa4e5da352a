#include "cqr/types.h"

#include <array>
#include <stdexcept>

namespace cqr {

namespace {

constexpr std::array<std::string_view, kNumEntityTypes> kTypeNames = {
    "song", "album", "artist", "book", "video", "shopping_item", "genre",
    "app",  "city",  "state",  "device_name", "routine_name", "contact_name",
};

constexpr std::array<std::string_view, 3> kDomainNames = {"music", "video", "other"};

}  // namespace

EntityClass entity_class(EntityType type) {
  switch (type) {
    case EntityType::kSong:
    case EntityType::kAlbum:
    case EntityType::kArtist:
    case EntityType::kBook:
    case EntityType::kVideo:
    case EntityType::kShoppingItem:
      return EntityClass::kA;
    default:
      return EntityClass::kB;
  }
}

std::string_view to_string(EntityType type) { return kTypeNames[static_cast<std::size_t>(type)]; }

std::string_view to_string(EntityClass cls) { return cls == EntityClass::kA ? "A" : "B"; }

std::string_view to_string(Domain domain) { return kDomainNames[static_cast<std::size_t>(domain)]; }

EntityType parse_entity_type(std::string_view name) {
  for (std::size_t i = 0; i < kTypeNames.size(); ++i) {
    if (kTypeNames[i] == name) return static_cast<EntityType>(i);
  }
  throw std::invalid_argument("unknown entity type '" + std::string(name) + "'");
}

Domain parse_domain(std::string_view name) {
  for (std::size_t i = 0; i < kDomainNames.size(); ++i) {
    if (kDomainNames[i] == name) return static_cast<Domain>(i);
  }
  throw std::invalid_argument("unknown domain '" + std::string(name) + "'");
}

}  // namespace cqr
