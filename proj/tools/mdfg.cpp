#include <cstdio>

int main() {
    std::puts("mdfg: command-line interface under construction");
    return 0;
}
