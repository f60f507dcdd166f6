int A[64];
int B[64];
int C[64];

void init(int a, int b) {
    for (int i = 0; i < 64; i++) {
        A[i] = ((a >> (i & 7)) & 15) - 8 + i;
        B[i] = ((b >> (i & 15)) & 7) * (i & 3) - 3;
    }
}

/* 8x8 product C = A * B, row-major. */
void multiply() {
    for (int i = 0; i < 8; i++) {
        for (int j = 0; j < 8; j++) {
            int acc = 0;
            for (int k = 0; k < 8; k++)
                acc += A[i * 8 + k] * B[k * 8 + j];
            C[i * 8 + j] = acc;
        }
    }
}
