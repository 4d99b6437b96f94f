#include <csignal>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "fcmir/mock_llm.hpp"

namespace {

volatile std::sig_atomic_t g_stop = 0;
void on_signal(int) { g_stop = 1; }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Offline chat-completions endpoint replaying canned fixtures"};
  std::string fixtures_file;
  app.add_option("--fixtures", fixtures_file,
                 "JSON map: request kind -> {content, fail_times, fail_status}");
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    fcmir::MockLlmServer server;
    fcmir::install_default_fixtures(server);
    if (!fixtures_file.empty()) {
      std::ifstream in(fixtures_file, std::ios::binary);
      if (!in) {
        std::cerr << "cannot read " << fixtures_file << "\n";
        return 2;
      }
      const auto j = nlohmann::json::parse(in);
      for (const auto& [kind, spec] : j.items()) {
        fcmir::MockLlmServer::Fixture f;
        if (spec.is_string()) {
          f.content = spec.get<std::string>();
        } else {
          const auto& c = spec.at("content");
          f.content = c.is_string() ? c.get<std::string>() : c.dump();
          f.fail_times = spec.value("fail_times", 0);
          f.fail_status = spec.value("fail_status", 500);
        }
        server.set_fixture(kind, f);
      }
    }

    std::cout << server.base_url() << std::endl;
    std::signal(SIGINT, on_signal);
    std::signal(SIGTERM, on_signal);
    while (!g_stop) std::this_thread::sleep_for(std::chrono::milliseconds(100));
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
