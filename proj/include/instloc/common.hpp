#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdlib>
#include <exception>
#include <functional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace instloc
{
/// Malformed or inconsistent caller input (bad shapes, missing files,
/// out-of-range parameters). Maps to CLI exit code 1.
class InputError : public std::invalid_argument
{
public:
  using std::invalid_argument::invalid_argument;
};

/// Invalid configuration values (probabilities, thresholds).
class ConfigError : public InputError
{
public:
  using InputError::InputError;
};

/// Non-finite values encountered during numerical evaluation.
class NumericalError : public std::runtime_error
{
public:
  using std::runtime_error::runtime_error;
};

/// Upper bound on worker threads, read from INSTLOC_THREADS (default: all
/// hardware threads, at least one).
inline std::size_t MaxThreads()
{
  std::size_t threads = std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("INSTLOC_THREADS"))
  {
    try
    {
      const long requested = std::stol(env);
      if (requested >= 1)
      {
        threads = static_cast<std::size_t>(requested);
      }
    }
    catch (const std::exception&)
    {
    }
  }
  return threads;
}

/// Runs fn(i) for i in [0, count) over at most MaxThreads() workers. Each
/// index is handled exactly once; callers write results into per-index
/// slots so output order never depends on scheduling.
inline void ParallelFor(std::size_t count, const std::function<void(std::size_t)>& fn)
{
  const std::size_t workers = std::min(MaxThreads(), count);
  if (workers <= 1)
  {
    for (std::size_t i = 0; i < count; ++i)
    {
      fn(i);
    }
    return;
  }
  std::vector<std::exception_ptr> errors(workers);
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w)
  {
    pool.emplace_back([&, w]() {
      try
      {
        for (std::size_t i = w; i < count; i += workers)
        {
          fn(i);
        }
      }
      catch (...)
      {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : pool)
  {
    t.join();
  }
  for (const auto& error : errors)
  {
    if (error)
    {
      std::rethrow_exception(error);
    }
  }
}
}  // namespace instloc
