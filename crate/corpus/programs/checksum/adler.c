extern int data[128];

int adler(int n) {
    int a = 1;
    int b = 0;
    for (int i = 0; i < n; i++) {
        a = (a + data[i]) % 65521;
        b = (b + a) % 65521;
    }
    return (b << 16) | a;
}

int xor_fold(int n) {
    int h = 0;
    int i = 0;
    while (i < n) {
        h = ((h << 5) ^ (h >> 27)) ^ data[i];
        i = i + 1;
    }
    return h;
}
