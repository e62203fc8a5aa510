#pragma once

#include <array>
#include <string>
#include <string_view>

namespace mtl {

enum class Task { kDepression, kStress };

inline constexpr std::array<Task, 2> kAllTasks{Task::kDepression, Task::kStress};

const char* to_string(Task task);
Task parse_task(std::string_view text);

inline Task other(Task task) { return task == Task::kDepression ? Task::kStress : Task::kDepression; }

// One value per task, indexable by Task.
template <typename T>
struct PerTask {
  T depression{};
  T stress{};

  T& operator[](Task t) { return t == Task::kDepression ? depression : stress; }
  const T& operator[](Task t) const { return t == Task::kDepression ? depression : stress; }
};

}  // namespace mtl
