// Runs every acceptance criterion and prints one PASS/FAIL line per criterion.
#include "qwave/suites.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

int main(int argc, char** argv) {
    const std::string work_dir = argc > 1 ? argv[1] : "acceptance-work";
    std::filesystem::create_directories(work_dir);
    qw::suites::SuiteContext ctx(work_dir);
    int failed = 0;
    for (const auto& name : qw::suites::suite_names()) {
        const auto r = qw::suites::run_suite(name, ctx);
        std::ofstream(std::filesystem::path(work_dir) / (name + ".json")) << r.to_json() << "\n";
        std::cout << r.summary() << std::endl;
        if (!r.pass()) ++failed;
    }
    std::cout << (failed ? "FAIL" : "PASS") << " acceptance: " << qw::suites::suite_names().size() - failed << " of "
              << qw::suites::suite_names().size() << " criteria pass" << std::endl;
    return failed ? 1 : 0;
}
