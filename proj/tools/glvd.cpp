#include <cstdio>

int main() {
    std::puts("glvd: command-line driver not wired up yet");
    return 2;
}
