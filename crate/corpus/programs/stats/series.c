int xs[100];

void generate(int a, int b, int n) {
    int x = a;
    for (int i = 0; i < n; i++) {
        x = (x * 75 + b) % 65537;
        xs[i] = x - 32768;
    }
}
