#include <cstdio>
int main(){ std::puts("tksg: under construction"); return 1; }
