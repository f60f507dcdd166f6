extern int coef[8];
extern int input[96];
extern int output[96];
void fir(int n, int shift);

int energy(int n) {
    int e = 0;
    int i = 0;
    do {
        e = e + (output[i] ^ (output[i] >> 3));
        i++;
    } while (i < n);
    return e;
}

int main(int a, int b) {
    int n = 1 + (b & 63);
    for (int k = 0; k < 8; k++)
        coef[k] = ((a >> k) & 7) - 2;
    for (int i = 0; i < n; i++)
        input[i] = ((b * (i + 1)) >> 4) & 1023;
    fir(n, 2);
    return energy(n);
}
