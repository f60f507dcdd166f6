int coef[8];
int input[96];
int output[96];

/* Direct-form FIR with eight taps; the first taps-1 outputs see zeros
   before the start of the input. */
void fir(int n, int shift) {
    for (int i = 0; i < n; i++) {
        int acc = 0;
        for (int k = 0; k < 8; k++) {
            int j = i - k;
            if (j >= 0)
                acc = acc + coef[k] * input[j];
        }
        output[i] = acc >> shift;
    }
}
