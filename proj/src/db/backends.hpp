#pragma once

#include <memory>

#include "e3/db.hpp"

namespace e3::db {

std::unique_ptr<Database> open_stub(const DbTarget& target);
std::unique_ptr<Database> open_postgres(const DbTarget& target);

}  // namespace e3::db
