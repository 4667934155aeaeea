#include <cstdio>

int main() {
  std::printf("splab: pipeline CLI under construction\n");
  return 0;
}
