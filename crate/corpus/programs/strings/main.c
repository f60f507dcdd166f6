extern int s1[48];
extern int s2[48];
int length(int cap);
int compare(int cap);

int main(int a, int b) {
    for (int i = 0; i < 48; i++) {
        s1[i] = 97 + ((a >> (i & 15)) & 7);
        s2[i] = s1[i];
    }
    s1[(a & 31) + 8] = 0;
    s2[b & 47] = 65;
    return length(48) * 100 + compare(40);
}
