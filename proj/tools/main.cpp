#include <cstdio>

int main() {
  std::puts("mpmflow: subcommands not wired up yet");
  return 1;
}
