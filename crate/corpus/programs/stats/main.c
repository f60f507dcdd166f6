void generate(int a, int b, int n);
int range(int n);
int mean(int n);
int crossings(int n);

int main(int a, int b) {
    int n = 1 + (b & 63) + ((a >> 8) & 31);
    generate(a, b, n);
    return range(n) + mean(n) * 7 + crossings(n) * 1000;
}
